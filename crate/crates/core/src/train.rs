//! Stochastic minibatch training with layered neighbor sampling, AdamW,
//! validation-based epoch selection, and three-granularity evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MergedCorpus;
use crate::metrics::{self, Level, LevelReport, MetricsReport};
use crate::model::net::{self, BatchData};
use crate::model::smote;
use crate::model::{ModelDims, ModelParams};
use crate::sampling::{self, BatchBlocks};
use crate::tensor::Tensor2;

fn default_hidden() -> usize {
    256
}
fn default_layers() -> usize {
    2
}
fn default_fanouts() -> Vec<usize> {
    vec![10, 25]
}
fn default_lr() -> f64 {
    0.007
}
fn default_wd() -> f64 {
    0.007
}
fn default_batch() -> usize {
    1024
}
fn default_k() -> usize {
    3
}
fn default_gamma() -> f64 {
    0.5
}
fn default_tau() -> f64 {
    0.5
}
fn default_epochs() -> usize {
    50
}
fn default_classes() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// `fanouts[l]` caps sampling for encoder layer `l + 1`; the last entry
    /// applies to the hop adjacent to the seeds.
    #[serde(default = "default_fanouts")]
    pub fanouts: Vec<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_k")]
    pub smote_k: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fanouts.len() != self.layers {
            return Err(Error::Data(format!(
                "fanouts length {} must equal layers {}",
                self.fanouts.len(),
                self.layers
            )));
        }
        if self.fanouts.iter().any(|&f| f == 0) {
            return Err(Error::Data("fanouts must be positive".into()));
        }
        if self.batch_size == 0 || self.smote_k == 0 || self.num_classes < 2 {
            return Err(Error::Data("batch size, SMOTE k, and classes must be positive".into()));
        }
        if self.layers > 0 && self.hidden_dim == 0 {
            return Err(Error::Data("hidden dim must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
pub struct AdamW {
    m: ModelParams,
    v: ModelParams,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamW {
    pub fn new(params: &ModelParams) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64, wd: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let pm = params.matrices_mut();
        let gm = grads.matrices();
        let mm = self.m.matrices_mut();
        let vm = self.v.matrices_mut();
        for (((p, g), m), v) in pm.into_iter().zip(gm).zip(mm).zip(vm) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * (mhat / (vhat.sqrt() + self.eps) + wd * p.data[i]);
            }
        }
    }
}

/// One line of the JSONL training log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_ce: f64,
    pub loss_bce: f64,
    pub val_macro_f1: Option<f64>,
}

pub struct TrainOutput {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Feature rows for the given node ids, widened to f64.
pub fn gather_x(corpus: &MergedCorpus, ids: &[u32]) -> Tensor2 {
    let d = corpus.d;
    let mut x = Tensor2::zeros(ids.len(), d);
    for (r, &id) in ids.iter().enumerate() {
        let row = &corpus.features[id as usize * d..(id as usize + 1) * d];
        x.row_mut(r).copy_from_slice(row);
    }
    x
}

/// Dense binary adjacency restricted to the seed set.
pub fn batch_adjacency(corpus: &MergedCorpus, seeds: &[u32]) -> Tensor2 {
    let pos: BTreeMap<u32, usize> = seeds.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut a = Tensor2::zeros(seeds.len(), seeds.len());
    for (i, &s) in seeds.iter().enumerate() {
        for &j in corpus.adj.neighbors_of(s as usize) {
            if let Some(&jj) = pos.get(&j) {
                a.set(i, jj, 1.0);
            }
        }
    }
    a
}

fn make_batch(corpus: &MergedCorpus, blocks: BatchBlocks) -> BatchData {
    let x = gather_x(corpus, blocks.input_ids());
    let labels: Vec<u8> = blocks.seeds.iter().map(|&s| corpus.labels[s as usize]).collect();
    let a_b = batch_adjacency(corpus, &blocks.seeds);
    BatchData {
        blocks,
        x,
        labels,
        a_b,
    }
}

/// Node ids belonging to the named pieces, ascending. Unknown names error.
pub fn nodes_of_pieces(corpus: &MergedCorpus, pieces: &[String]) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for p in pieces {
        let pi = corpus
            .piece_ids
            .iter()
            .position(|q| q == p)
            .ok_or_else(|| Error::Data(format!("piece {p:?} not in corpus")))?;
        out.extend(corpus.node_offsets[pi] as u32..corpus.node_offsets[pi + 1] as u32);
    }
    out.sort_unstable();
    Ok(out)
}

/// Train on the given piece list; when `val_pieces` is nonempty the epoch
/// with the best validation macro-F1 wins, otherwise the final epoch.
/// `init` continues from existing parameters (fine-tuning).
pub fn train(
    corpus: &MergedCorpus,
    train_pieces: &[String],
    val_pieces: &[String],
    cfg: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let dims = ModelDims {
        input_dim: corpus.d,
        hidden_dim: cfg.hidden_dim,
        layers: cfg.layers,
        classes: cfg.num_classes,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = match init {
        Some(p) => {
            if p.dims != dims {
                return Err(Error::Dimension(format!(
                    "pretrained dims {:?} do not match config dims {:?}",
                    p.dims, dims
                )));
            }
            p
        }
        None => ModelParams::init(dims, &mut rng),
    };
    let train_nodes = nodes_of_pieces(corpus, train_pieces)?;
    if train_nodes.is_empty() {
        return Err(Error::Data("training split selects no nodes".into()));
    }
    let val_nodes = nodes_of_pieces(corpus, val_pieces)?;
    for &v in &val_nodes {
        debug_assert!(!train_nodes.contains(&v), "piece-level isolation violated");
    }
    let mut opt = AdamW::new(&params);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ModelParams, usize)> = None;
    let mut order = train_nodes.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_tot, mut sum_ce, mut sum_bce, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let blocks = sampling::sample_neighbors(&corpus.adj, chunk, &cfg.fanouts, &mut rng);
            let batch = make_batch(corpus, blocks);
            let (losses, cache) = net::train_forward(
                &params,
                &batch,
                |h, labels| smote::make_plan(h, labels, cfg.smote_k, &mut rng),
                cfg.gamma,
                cfg.tau,
            )?;
            if !losses.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {batches}: \
                     total={} ce={} bce={}",
                    losses.total, losses.ce, losses.bce
                )));
            }
            let grads = net::train_backward(&params, &batch, &cache, cfg.gamma, cfg.tau)?;
            opt.step(&mut params, &grads, cfg.lr, cfg.weight_decay);
            sum_tot += losses.total;
            sum_ce += losses.ce;
            sum_bce += losses.bce;
            batches += 1;
        }
        let inv = 1.0 / batches.max(1) as f64;
        let val_macro_f1 = if val_nodes.is_empty() {
            None
        } else {
            let probs = predict_nodes(&params, corpus, &val_nodes)?;
            let preds = metrics::argmax_preds(&probs);
            let labels: Vec<u8> = val_nodes.iter().map(|&i| corpus.labels[i as usize]).collect();
            let rep = metrics::f1_report(&preds, &labels, cfg.num_classes);
            Some(rep.macro_f1)
        };
        log.push(EpochRecord {
            epoch,
            loss_total: sum_tot * inv,
            loss_ce: sum_ce * inv,
            loss_bce: sum_bce * inv,
            val_macro_f1,
        });
        if let Some(f1) = val_macro_f1 {
            if best.as_ref().map_or(true, |(b, _, _)| f1 > *b) {
                best = Some((f1, params.clone(), epoch));
            }
        }
    }
    let (params, best_epoch) = match best {
        Some((_, p, e)) => (p, e),
        None => (params, cfg.epochs),
    };
    Ok(TrainOutput {
        params,
        log,
        best_epoch,
    })
}

/// Full-neighborhood inference for an explicit node set, batched per piece.
/// Rows align with `nodes` (which must be sorted ascending).
pub fn predict_nodes(params: &ModelParams, corpus: &MergedCorpus, nodes: &[u32]) -> Result<Tensor2> {
    let mut probs = Tensor2::zeros(nodes.len(), params.dims.classes);
    let mut start = 0usize;
    while start < nodes.len() {
        let piece = corpus.piece_of[nodes[start] as usize];
        let mut end = start;
        while end < nodes.len() && corpus.piece_of[nodes[end] as usize] == piece {
            end += 1;
        }
        let seeds = &nodes[start..end];
        let blocks = sampling::full_blocks(&corpus.adj, seeds, params.dims.layers);
        let batch = make_batch(corpus, blocks);
        let p = net::predict_probs(params, &batch)?;
        for (r, row) in (start..end).zip(0..p.rows) {
            probs.row_mut(r).copy_from_slice(p.row(row));
        }
        start = end;
    }
    Ok(probs)
}

/// Evaluate the model on the given pieces at the requested granularities.
pub fn evaluate(
    params: &ModelParams,
    corpus: &MergedCorpus,
    pieces: &[String],
    levels: &[Level],
) -> Result<MetricsReport> {
    let nodes = nodes_of_pieces(corpus, pieces)?;
    if nodes.is_empty() {
        return Err(Error::Data("evaluation split selects no nodes".into()));
    }
    let probs = predict_nodes(params, corpus, &nodes)?;
    let preds = metrics::argmax_preds(&probs);
    let labels: Vec<u8> = nodes.iter().map(|&i| corpus.labels[i as usize]).collect();
    let classes = params.dims.classes;
    let mut out = BTreeMap::new();
    for &level in levels {
        let report: LevelReport = match level {
            Level::Note => metrics::f1_report(&preds, &labels, classes),
            Level::Onset | Level::Beat => {
                let groups: Vec<u32> = nodes
                    .iter()
                    .map(|&i| match level {
                        Level::Onset => corpus.onset_group[i as usize],
                        _ => corpus.beat_group[i as usize],
                    })
                    .collect();
                let (gp, gl) = metrics::aggregate(&preds, Some(&probs), &labels, &groups);
                metrics::f1_report(&gp, &gl, classes)
            }
        };
        out.insert(level.as_str().to_string(), report);
    }
    Ok(MetricsReport { levels: out })
}
