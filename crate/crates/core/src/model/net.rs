//! Forward and reverse passes of the network. The backward pass is
//! hand-derived reverse mode over exactly the ops the model uses; sampling
//! choices (neighborhoods, SMOTE anchors/neighbors, lambdas) are treated as
//! constants of the pass.

use crate::error::{Error, Result};
use crate::model::smote::{self, SmoteOutput, SmotePlan};
use crate::model::ModelParams;
use crate::sampling::{BatchBlocks, Block};
use crate::tensor::Tensor2;

pub const NORM_EPS: f64 = 1e-12;
pub const LOG_EPS: f64 = 1e-12;

/// Intermediates of one GraphSAGE layer, kept for the reverse pass.
pub struct SageCache {
    pub h_src: Tensor2,
    /// `[self | mean-pooled neighbors]`.
    pub z: Tensor2,
    pub u: Tensor2,
    pub r: Tensor2,
    pub norms: Vec<f64>,
}

/// One GraphSAGE encoder layer:
/// neighbor mean of pooled features, concat with self, linear, ReLU, then
/// L2 row normalization (zero rows stay zero).
pub fn sage_layer_forward(
    h_src: &Tensor2,
    block: &Block,
    w_pool: &Tensor2,
    w_enc: &Tensor2,
) -> Result<(Tensor2, SageCache)> {
    let d_out = w_pool.rows;
    let n_dst = block.dst_ids.len();
    let p = h_src.matmul_nt(w_pool);
    let mut agg = Tensor2::zeros(n_dst, d_out);
    for i in 0..n_dst {
        let nbrs = &block.neighbor_idx[i];
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let row = agg.row_mut(i);
        for &j in nbrs {
            for (c, v) in p.row(j as usize).iter().enumerate() {
                row[c] += v * inv;
            }
        }
    }
    let mut selfh = Tensor2::zeros(n_dst, h_src.cols);
    for i in 0..n_dst {
        selfh
            .row_mut(i)
            .copy_from_slice(h_src.row(block.self_idx[i] as usize));
    }
    let z = selfh.hcat(&agg);
    let u = z.matmul_nt(w_enc);
    let mut r = u.clone();
    for v in &mut r.data {
        *v = v.max(0.0);
    }
    let mut h_dst = r.clone();
    let mut norms = Vec::with_capacity(n_dst);
    for i in 0..n_dst {
        let n = l2(r.row(i));
        norms.push(n);
        let s = n.max(NORM_EPS);
        for v in h_dst.row_mut(i) {
            *v /= s;
        }
    }
    if !h_dst.is_finite() {
        return Err(Error::Numeric("non-finite encoder output".into()));
    }
    Ok((
        h_dst,
        SageCache {
            h_src: h_src.clone(),
            z,
            u,
            r,
            norms,
        },
    ))
}

/// Reverse of `sage_layer_forward`. Returns (d_h_src, d_w_pool, d_w_enc).
pub fn sage_layer_backward(
    cache: &SageCache,
    block: &Block,
    w_pool: &Tensor2,
    w_enc: &Tensor2,
    d_h_dst: &Tensor2,
) -> (Tensor2, Tensor2, Tensor2) {
    let n_dst = block.dst_ids.len();
    let n_src = cache.h_src.rows;
    let d_in = cache.h_src.cols;
    let d_out = w_pool.rows;

    // norm then ReLU
    let mut d_r = Tensor2::zeros(n_dst, d_out);
    for i in 0..n_dst {
        let n = cache.norms[i];
        let dh = d_h_dst.row(i);
        let r = cache.r.row(i);
        let out = d_r.row_mut(i);
        if n > NORM_EPS {
            let rdh: f64 = r.iter().zip(dh).map(|(a, b)| a * b).sum();
            for c in 0..d_out {
                out[c] = dh[c] / n - r[c] * rdh / (n * n * n);
            }
        } else {
            for c in 0..d_out {
                out[c] = dh[c] / NORM_EPS;
            }
        }
    }
    let mut d_u = d_r;
    for (du, &u) in d_u.data.iter_mut().zip(&cache.u.data) {
        if u <= 0.0 {
            *du = 0.0;
        }
    }

    let d_w_enc = d_u.matmul_tn(&cache.z);
    let d_z = d_u.matmul(w_enc);

    let mut d_h_src = Tensor2::zeros(n_src, d_in);
    let mut d_p = Tensor2::zeros(n_src, d_out);
    for i in 0..n_dst {
        let dz = d_z.row(i);
        let si = block.self_idx[i] as usize;
        for c in 0..d_in {
            d_h_src.row_mut(si)[c] += dz[c];
        }
        let nbrs = &block.neighbor_idx[i];
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            let row = d_p.row_mut(j as usize);
            for c in 0..d_out {
                row[c] += dz[d_in + c] * inv;
            }
        }
    }
    let d_w_pool = d_p.matmul_tn(&cache.h_src);
    let d_from_p = d_p.matmul(w_pool);
    d_h_src.add_assign(&d_from_p);
    (d_h_src, d_w_pool, d_w_enc)
}

/// Stacked encoder, deepest sampled hop first. With zero layers the input
/// rows (which must already correspond to the seeds) pass through unchanged.
pub fn encode(
    params: &ModelParams,
    blocks: &BatchBlocks,
    x: &Tensor2,
) -> Result<(Tensor2, Vec<SageCache>)> {
    let l = params.dims.layers;
    debug_assert_eq!(blocks.blocks.len(), l);
    if l == 0 {
        return Ok((x.clone(), Vec::new()));
    }
    let mut caches = Vec::with_capacity(l);
    let mut h = x.clone();
    for (li, block) in blocks.blocks.iter().enumerate() {
        debug_assert_eq!(h.rows, block.src_ids.len());
        let (h_next, cache) = sage_layer_forward(&h, block, &params.w_pool[li], &params.w_enc[li])?;
        caches.push(cache);
        h = h_next;
    }
    Ok((h, caches))
}

pub fn encode_backward(
    params: &ModelParams,
    blocks: &BatchBlocks,
    caches: &[SageCache],
    d_h_enc: &Tensor2,
    grads: &mut ModelParams,
) {
    let mut d_h = d_h_enc.clone();
    for li in (0..params.dims.layers).rev() {
        let (d_src, d_wp, d_we) = sage_layer_backward(
            &caches[li],
            &blocks.blocks[li],
            &params.w_pool[li],
            &params.w_enc[li],
            &d_h,
        );
        grads.w_pool[li].add_assign(&d_wp);
        grads.w_enc[li].add_assign(&d_we);
        d_h = d_src;
    }
}

/// `sigmoid(H W H^T)`, entries strictly in (0, 1).
pub fn decode_adjacency(h: &Tensor2, w_dec: &Tensor2) -> Tensor2 {
    let hw = h.matmul(w_dec);
    let mut s = hw.matmul_nt(h);
    for v in &mut s.data {
        *v = sigmoid(*v);
    }
    s
}

/// Hard shrinkage: keep entries with magnitude above `tau`, zero the rest.
pub fn hardshrink(a: &Tensor2, tau: f64) -> Tensor2 {
    let mut out = a.clone();
    for v in &mut out.data {
        if *v <= tau && *v >= -tau {
            *v = 0.0;
        }
    }
    out
}

/// Classifier intermediates.
pub struct ClassifierCache {
    pub q: Tensor2,
    pub agg: Tensor2,
    pub weight_sums: Vec<f64>,
    pub z: Tensor2,
    pub u: Tensor2,
    pub r: Tensor2,
    pub norms: Vec<f64>,
    pub hc: Tensor2,
}

/// GraphSAGE classifier head over an arbitrary (possibly generated) dense
/// adjacency: weighted-mean aggregation, concat, ReLU, row norm, softmax.
pub fn classify(h: &Tensor2, a: &Tensor2, params: &ModelParams) -> Result<(Tensor2, ClassifierCache)> {
    let m = h.rows;
    assert_eq!(a.rows, m);
    assert_eq!(a.cols, m);
    let dl = params.dims.latent_dim();
    let q = h.matmul_nt(&params.w_pool_clf);
    let mut agg = Tensor2::zeros(m, dl);
    let mut weight_sums = vec![0.0; m];
    for i in 0..m {
        let w = a.row(i);
        let sw: f64 = w.iter().sum();
        weight_sums[i] = sw;
        if sw == 0.0 {
            continue;
        }
        let row = agg.row_mut(i);
        for j in 0..m {
            let wj = w[j];
            if wj == 0.0 {
                continue;
            }
            for (c, v) in q.row(j).iter().enumerate() {
                row[c] += wj * v;
            }
        }
        for v in row {
            *v /= sw;
        }
    }
    let z = h.hcat(&agg);
    let u = z.matmul_nt(&params.w_clf);
    let mut r = u.clone();
    for v in &mut r.data {
        *v = v.max(0.0);
    }
    let mut hc = r.clone();
    let mut norms = Vec::with_capacity(m);
    for i in 0..m {
        let n = l2(r.row(i));
        norms.push(n);
        let s = n.max(NORM_EPS);
        for v in hc.row_mut(i) {
            *v /= s;
        }
    }
    let logits = hc.matmul_nt(&params.w_proj);
    let probs = softmax_rows(&logits);
    if !probs.is_finite() {
        return Err(Error::Numeric("non-finite classifier output".into()));
    }
    Ok((
        probs,
        ClassifierCache {
            q,
            agg,
            weight_sums,
            z,
            u,
            r,
            norms,
            hc,
        },
    ))
}

/// Reverse of `classify` given `d_logits`. Returns (d_h, d_a) and
/// accumulates weight gradients.
pub fn classify_backward(
    h: &Tensor2,
    a: &Tensor2,
    params: &ModelParams,
    cache: &ClassifierCache,
    d_logits: &Tensor2,
    grads: &mut ModelParams,
) -> (Tensor2, Tensor2) {
    let m = h.rows;
    let dl = params.dims.latent_dim();

    grads.w_proj.add_assign(&d_logits.matmul_tn(&cache.hc));
    let d_hc = d_logits.matmul(&params.w_proj);

    let mut d_r = Tensor2::zeros(m, dl);
    for i in 0..m {
        let n = cache.norms[i];
        let dh = d_hc.row(i);
        let r = cache.r.row(i);
        let out = d_r.row_mut(i);
        if n > NORM_EPS {
            let rdh: f64 = r.iter().zip(dh).map(|(x, y)| x * y).sum();
            for c in 0..dl {
                out[c] = dh[c] / n - r[c] * rdh / (n * n * n);
            }
        } else {
            for c in 0..dl {
                out[c] = dh[c] / NORM_EPS;
            }
        }
    }
    let mut d_u = d_r;
    for (du, &u) in d_u.data.iter_mut().zip(&cache.u.data) {
        if u <= 0.0 {
            *du = 0.0;
        }
    }
    grads.w_clf.add_assign(&d_u.matmul_tn(&cache.z));
    let d_z = d_u.matmul(&params.w_clf);

    let mut d_h = Tensor2::zeros(m, dl);
    let mut d_agg = Tensor2::zeros(m, dl);
    for i in 0..m {
        let dz = d_z.row(i);
        d_h.row_mut(i).copy_from_slice(&dz[..dl]);
        d_agg.row_mut(i).copy_from_slice(&dz[dl..]);
    }

    let mut d_q = Tensor2::zeros(m, dl);
    let mut d_a = Tensor2::zeros(m, m);
    for i in 0..m {
        let sw = cache.weight_sums[i];
        if sw == 0.0 {
            continue;
        }
        let da = d_agg.row(i);
        let agg_i = cache.agg.row(i);
        for j in 0..m {
            let wj = a.get(i, j);
            let qj = cache.q.row(j);
            // d/dw_ij of the weighted mean
            let mut dot = 0.0;
            for c in 0..dl {
                dot += da[c] * (qj[c] - agg_i[c]);
            }
            d_a.set(i, j, dot / sw);
            if wj != 0.0 {
                let scale = wj / sw;
                let row = d_q.row_mut(j);
                for c in 0..dl {
                    row[c] += scale * da[c];
                }
            }
        }
    }
    grads.w_pool_clf.add_assign(&d_q.matmul_tn(h));
    d_h.add_assign(&d_q.matmul(&params.w_pool_clf));
    (d_h, d_a)
}

/// Mean negative log-probability of the true class.
pub fn ce_loss(probs: &Tensor2, labels: &[u8]) -> f64 {
    assert_eq!(probs.rows, labels.len());
    let m = probs.rows.max(1);
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.get(i, y as usize).max(LOG_EPS).ln())
        .sum::<f64>()
        / m as f64
}

/// Weighted mean BCE between the decoded adjacency (original rows only) and
/// the binary batch adjacency; positive entries weighted by #zeros/#ones.
pub fn bce_loss(a_dec: &Tensor2, a_b: &Tensor2) -> f64 {
    let m = a_b.rows;
    assert!(a_dec.rows >= m && a_dec.cols >= m);
    let ones: f64 = a_b.data.iter().sum();
    let zeros = (m * m) as f64 - ones;
    let w_pos = if ones > 0.0 { zeros / ones } else { 1.0 };
    let mut total = 0.0;
    let mut wsum = 0.0;
    for i in 0..m {
        for j in 0..m {
            let y = a_b.get(i, j);
            let p = a_dec.get(i, j).clamp(LOG_EPS, 1.0 - LOG_EPS);
            let w = if y > 0.5 { w_pos } else { 1.0 };
            total += w * -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            wsum += w;
        }
    }
    if wsum == 0.0 {
        0.0
    } else {
        total / wsum
    }
}

fn bce_grad(a_dec: &Tensor2, a_b: &Tensor2, scale: f64, d_a_dec: &mut Tensor2) {
    let m = a_b.rows;
    let ones: f64 = a_b.data.iter().sum();
    let zeros = (m * m) as f64 - ones;
    let w_pos = if ones > 0.0 { zeros / ones } else { 1.0 };
    let wsum = ones * w_pos + zeros;
    if wsum == 0.0 {
        return;
    }
    for i in 0..m {
        for j in 0..m {
            let y = a_b.get(i, j);
            let p = a_dec.get(i, j);
            if p <= LOG_EPS || p >= 1.0 - LOG_EPS {
                continue; // clamped region has zero gradient
            }
            let w = if y > 0.5 { w_pos } else { 1.0 };
            let g = w * (-(y / p) + (1.0 - y) / (1.0 - p)) / wsum;
            let cur = d_a_dec.get(i, j);
            d_a_dec.set(i, j, cur + scale * g);
        }
    }
}

/// One batch of training inputs.
pub struct BatchData {
    pub blocks: BatchBlocks,
    /// Feature rows for `blocks.input_ids()`.
    pub x: Tensor2,
    /// Seed labels.
    pub labels: Vec<u8>,
    /// Binary adjacency among the seeds.
    pub a_b: Tensor2,
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub bce: f64,
}

pub struct TrainCache {
    pub sage: Vec<SageCache>,
    pub h_enc: Tensor2,
    pub smote: SmoteOutput,
    pub a_dec: Tensor2,
    pub a_thr: Tensor2,
    pub clf: ClassifierCache,
    pub probs: Tensor2,
}

/// Full training-mode forward pass: encode, SMOTE, decode, threshold,
/// classify, composite loss. The planner sees the encoded latents and the
/// seed labels; pass a closure returning a frozen plan to replay a pass.
pub fn train_forward<F>(
    params: &ModelParams,
    batch: &BatchData,
    planner: F,
    gamma: f64,
    tau: f64,
) -> Result<(LossParts, TrainCache)>
where
    F: FnOnce(&Tensor2, &[u8]) -> SmotePlan,
{
    let (h_enc, sage) = encode(params, &batch.blocks, &batch.x)?;
    let plan = planner(&h_enc, &batch.labels);
    let smote_out = smote::apply_plan(&h_enc, &batch.labels, &plan);
    let a_dec = decode_adjacency(&smote_out.h, &params.w_dec);
    let a_thr = hardshrink(&a_dec, tau);
    let (probs, clf) = classify(&smote_out.h, &a_thr, params)?;
    let ce = ce_loss(&probs, &smote_out.labels_aug);
    let bce = bce_loss(&a_dec, &batch.a_b);
    let losses = LossParts {
        total: ce + gamma * bce,
        ce,
        bce,
    };
    Ok((
        losses,
        TrainCache {
            sage,
            h_enc,
            smote: smote_out,
            a_dec,
            a_thr,
            clf,
            probs,
        },
    ))
}

/// Exact gradients of the composite loss for every weight matrix.
pub fn train_backward(
    params: &ModelParams,
    batch: &BatchData,
    cache: &TrainCache,
    gamma: f64,
    tau: f64,
) -> Result<ModelParams> {
    let mut grads = params.zeros_like();
    let m = cache.probs.rows;
    let labels = &cache.smote.labels_aug;

    // cross entropy through softmax
    let mut d_logits = cache.probs.clone();
    for i in 0..m {
        let y = labels[i] as usize;
        if cache.probs.get(i, y) <= LOG_EPS {
            // clamped log: this row contributes no gradient
            for c in 0..d_logits.cols {
                d_logits.set(i, c, 0.0);
            }
            continue;
        }
        let v = d_logits.get(i, y) - 1.0;
        d_logits.set(i, y, v);
    }
    d_logits.scale(1.0 / m as f64);

    let (mut d_h_smote, d_a_thr) =
        classify_backward(&cache.smote.h, &cache.a_thr, params, &cache.clf, &d_logits, &mut grads);

    // through hard shrinkage: identity on kept entries
    let mut d_a_dec = Tensor2::zeros(m, m);
    for idx in 0..m * m {
        let a = cache.a_dec.data[idx];
        if a > tau || a < -tau {
            d_a_dec.data[idx] = d_a_thr.data[idx];
        }
    }
    bce_grad(&cache.a_dec, &batch.a_b, gamma, &mut d_a_dec);

    // decoder: S = H W H^T, A = sigmoid(S)
    let mut d_s = d_a_dec;
    for (ds, &a) in d_s.data.iter_mut().zip(&cache.a_dec.data) {
        *ds *= a * (1.0 - a);
    }
    let h = &cache.smote.h;
    grads
        .w_dec
        .add_assign(&h.matmul_tn(&d_s.matmul(h)));
    let hwt = h.matmul_nt(&params.w_dec);
    let hw = h.matmul(&params.w_dec);
    d_h_smote.add_assign(&d_s.matmul(&hwt));
    // transpose term: d_s^T * hw
    let mut d_s_t = Tensor2::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            d_s_t.set(i, j, d_s.get(j, i));
        }
    }
    d_h_smote.add_assign(&d_s_t.matmul(&hw));

    // SMOTE interpolation back to encoder rows
    let m0 = cache.h_enc.rows;
    let mut d_h_enc = Tensor2::zeros(m0, cache.h_enc.cols);
    for i in 0..m0 {
        d_h_enc.row_mut(i).copy_from_slice(&d_h_smote.row(i)[..]);
    }
    for (si, s) in cache.smote.plan.rows.iter().enumerate() {
        let dr = d_h_smote.row(m0 + si);
        for c in 0..cache.h_enc.cols {
            let v = dr[c];
            d_h_enc.row_mut(s.anchor)[c] += (1.0 - s.lambda) * v;
            d_h_enc.row_mut(s.neighbor)[c] += s.lambda * v;
        }
    }

    encode_backward(params, &batch.blocks, &cache.sage, &d_h_enc, &mut grads);
    for g in grads.matrices() {
        if !g.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
    }
    Ok(grads)
}

/// Inference: encode with the given blocks and classify against the real
/// batch adjacency (no SMOTE, no decoder). With zero encoder layers the
/// adjacency is ignored entirely (no graph convolution).
pub fn predict_probs(params: &ModelParams, batch: &BatchData) -> Result<Tensor2> {
    let (h_enc, _) = encode(params, &batch.blocks, &batch.x)?;
    let a = if params.dims.layers == 0 {
        Tensor2::zeros(h_enc.rows, h_enc.rows)
    } else {
        batch.a_b.clone()
    };
    let (probs, _) = classify(&h_enc, &a, params)?;
    Ok(probs)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
