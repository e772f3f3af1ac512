//! The Stochastic GraphSMOTE network: GraphSAGE encoder, latent-space batch
//! SMOTE, edge decoder with hard shrinkage, GraphSAGE classifier, composite
//! loss, and exact reverse-mode gradients for all weight matrices.

pub mod net;
pub mod smote;

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

const CKPT_MAGIC: &[u8; 4] = b"SGSM";
const CKPT_VERSION: u16 = 1;

/// Network shape. With `layers == 0` the encoder is the identity on input
/// features and the classifier ignores the adjacency (no graph convolution).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub classes: usize,
}

impl ModelDims {
    /// Dimension of encoder layer `l` outputs; layer 0 = input features.
    pub fn layer_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    /// Latent dimension fed to decoder and classifier.
    pub fn latent_dim(&self) -> usize {
        self.layer_dim(self.layers)
    }
}

/// All learnable weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// Per encoder layer: `d_l x d_{l-1}`.
    pub w_pool: Vec<Tensor2>,
    /// Per encoder layer: `d_l x (d_{l-1} + d_l)`.
    pub w_enc: Vec<Tensor2>,
    /// `d_L x d_L`.
    pub w_dec: Tensor2,
    /// `d_L x d_L`.
    pub w_pool_clf: Tensor2,
    /// `d_L x 2 d_L`.
    pub w_clf: Tensor2,
    /// `C x d_L`.
    pub w_proj: Tensor2,
}

fn glorot<R: Rng>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor2 {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor2::from_vec(rows, cols, data)
}

impl ModelParams {
    pub fn init<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        let mut w_pool = Vec::new();
        let mut w_enc = Vec::new();
        for l in 1..=dims.layers {
            let d_in = dims.layer_dim(l - 1);
            let d_out = dims.layer_dim(l);
            w_pool.push(glorot(d_out, d_in, d_in, d_out, rng));
            w_enc.push(glorot(d_out, d_in + d_out, d_in + d_out, d_out, rng));
        }
        let dl = dims.latent_dim();
        let w_dec = glorot(dl, dl, dl, dl, rng);
        let w_pool_clf = glorot(dl, dl, dl, dl, rng);
        let w_clf = glorot(dl, 2 * dl, 2 * dl, dl, rng);
        let w_proj = glorot(dims.classes, dl, dl, dims.classes, rng);
        ModelParams {
            dims,
            w_pool,
            w_enc,
            w_dec,
            w_pool_clf,
            w_clf,
            w_proj,
        }
    }

    /// Zero-valued clone with the same shapes, used for gradients and
    /// optimizer state.
    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor2| Tensor2::zeros(t.rows, t.cols);
        ModelParams {
            dims: self.dims.clone(),
            w_pool: self.w_pool.iter().map(z).collect(),
            w_enc: self.w_enc.iter().map(z).collect(),
            w_dec: z(&self.w_dec),
            w_pool_clf: z(&self.w_pool_clf),
            w_clf: z(&self.w_clf),
            w_proj: z(&self.w_proj),
        }
    }

    /// All matrices in checkpoint order, with stable names.
    pub fn named(&self) -> Vec<(String, &Tensor2)> {
        let mut out = Vec::new();
        for (l, (p, e)) in self.w_pool.iter().zip(&self.w_enc).enumerate() {
            out.push((format!("w_pool_{}", l + 1), p));
            out.push((format!("w_enc_{}", l + 1), e));
        }
        out.push(("w_dec".into(), &self.w_dec));
        out.push(("w_pool_clf".into(), &self.w_pool_clf));
        out.push(("w_clf".into(), &self.w_clf));
        out.push(("w_proj".into(), &self.w_proj));
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out: Vec<&mut Tensor2> = Vec::new();
        for (p, e) in self.w_pool.iter_mut().zip(self.w_enc.iter_mut()) {
            out.push(p);
            out.push(e);
        }
        out.push(&mut self.w_dec);
        out.push(&mut self.w_pool_clf);
        out.push(&mut self.w_clf);
        out.push(&mut self.w_proj);
        out
    }

    pub fn matrices(&self) -> Vec<&Tensor2> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }
}

/// JSON header stored in every checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dims: ModelDims,
    pub feature_manifest_hash: String,
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Write a checkpoint: magic, version, JSON header, then the weight matrices
/// as 64-bit little-endian arrays in `named()` order.
pub fn save_checkpoint(params: &ModelParams, header: &CheckpointHeader, path: &Path) -> Result<()> {
    if header.dims != params.dims {
        return Err(Error::Dimension("checkpoint header dims differ from params".into()));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    let hdr = serde_json::to_vec(header)?;
    w.write_all(&(hdr.len() as u32).to_le_bytes())?;
    w.write_all(&hdr)?;
    for (_, m) in params.named() {
        for v in &m.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let mut buf = Vec::new();
    std::io::BufReader::new(std::fs::File::open(path)?).read_to_end(&mut buf)?;
    let need = |at: usize, len: usize| -> Result<&[u8]> {
        buf.get(at..at + len).ok_or_else(|| {
            Error::Format(format!("{}: truncated checkpoint", path.display()))
        })
    };
    if need(0, 4)? != CKPT_MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint file", path.display())));
    }
    let version = u16::from_le_bytes(need(4, 2)?.try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let hlen = u32::from_le_bytes(need(6, 4)?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(need(10, hlen)?)?;
    let mut pos = 10 + hlen;
    let mut read_mat = |rows: usize, cols: usize| -> Result<Tensor2> {
        let raw = need(pos, rows * cols * 8)?;
        pos += rows * cols * 8;
        Ok(Tensor2::from_vec(
            rows,
            cols,
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ))
    };
    let dims = header.dims.clone();
    let mut w_pool = Vec::new();
    let mut w_enc = Vec::new();
    for l in 1..=dims.layers {
        let d_in = dims.layer_dim(l - 1);
        let d_out = dims.layer_dim(l);
        w_pool.push(read_mat(d_out, d_in)?);
        w_enc.push(read_mat(d_out, d_in + d_out)?);
    }
    let dl = dims.latent_dim();
    let w_dec = read_mat(dl, dl)?;
    let w_pool_clf = read_mat(dl, dl)?;
    let w_clf = read_mat(dl, 2 * dl)?;
    let w_proj = read_mat(dims.classes, dl)?;
    Ok((
        ModelParams {
            dims,
            w_pool,
            w_enc,
            w_dec,
            w_pool_clf,
            w_clf,
            w_proj,
        },
        header,
    ))
}
