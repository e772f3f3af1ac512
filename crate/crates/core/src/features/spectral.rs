//! Laplacian eigenvector positional features.
//!
//! Eigenvectors of the symmetric normalized Laplacian
//! `L = I - D^{-1/2} A D^{-1/2}` for the K smallest eigenvalues, computed per
//! piece. Dense solver up to `DENSE_LIMIT` nodes, Lanczos with full
//! reorthogonalization above.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::Adjacency;

pub const DEFAULT_K: usize = 20;
const DENSE_LIMIT: usize = 2000;
const SIGN_EPS: f64 = 1e-12;

/// Dense symmetric normalized Laplacian. Isolated nodes get a plain 1 on the
/// diagonal (their degree term is 0).
pub fn normalized_laplacian(adj: &Adjacency) -> DMatrix<f64> {
    let n = adj.n;
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d = adj.degree(i);
            if d == 0 {
                0.0
            } else {
                1.0 / (d as f64).sqrt()
            }
        })
        .collect();
    let mut l = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for &j in adj.neighbors_of(i) {
            let j = j as usize;
            l[(i, j)] -= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    l
}

/// Per-node spectral features: `n x k` row-major matrix of the K smallest
/// eigenvectors (unit-norm columns, sign fixed so the first component above
/// `1e-12` in magnitude is positive; columns beyond `n` zero-padded).
pub fn spectral_features(adj: &Adjacency, k: usize, piece_id: &str) -> Result<Vec<f64>> {
    let n = adj.n;
    if n == 0 {
        return Ok(Vec::new());
    }
    let k_eff = k.min(n);
    let (vals, mut vecs) = if n <= DENSE_LIMIT {
        dense_eigs(adj, k_eff)
    } else {
        lanczos_eigs(adj, k_eff, piece_id)?
    };
    debug_assert_eq!(vals.len(), k_eff);
    for c in 0..k_eff {
        fix_sign(&mut vecs[c]);
    }
    // row-major n x k with zero padding
    let mut out = vec![0.0; n * k];
    for c in 0..k_eff {
        for i in 0..n {
            out[i * k + c] = vecs[c][i];
        }
    }
    Ok(out)
}

fn fix_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x.abs() > SIGN_EPS {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

fn dense_eigs(adj: &Adjacency, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let l = normalized_laplacian(adj);
    let n = adj.n;
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .take(k)
        .map(|&c| {
            let col = eig.eigenvectors.column(c);
            let norm = col.norm();
            col.iter().map(|&x| x / norm).collect()
        })
        .collect();
    (vals, vecs)
}

/// Lanczos with full reorthogonalization on the sparse Laplacian, growing the
/// Krylov basis until the K smallest Ritz pairs have small residuals.
fn lanczos_eigs(adj: &Adjacency, k: usize, piece_id: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = adj.n;
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d = adj.degree(i);
            if d == 0 {
                0.0
            } else {
                1.0 / (d as f64).sqrt()
            }
        })
        .collect();
    let matvec = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut acc = x[i];
            for &j in adj.neighbors_of(i) {
                let j = j as usize;
                acc -= inv_sqrt_deg[i] * inv_sqrt_deg[j] * x[j];
            }
            out[i] = acc;
        }
    };

    let max_m = n.min(600);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    // deterministic start vector
    let mut v: Vec<f64> = (0..n)
        .map(|i| 0.5 + (i as f64 * 0.7548776662466927).fract())
        .collect();
    normalize(&mut v);

    let mut w = vec![0.0; n];
    let mut m = 0;
    loop {
        basis.push(v.clone());
        matvec(&v, &mut w);
        let alpha = dot(&v, &w);
        alphas.push(alpha);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for i in 0..n {
                    w[i] -= c * b[i];
                }
            }
        }
        let beta = dot(&w, &w).sqrt();
        m += 1;
        let enough = m >= 2 * k + 10 || m == n;
        if enough && (m % 20 == 0 || m == n || beta < 1e-12) {
            if let Some(res) = ritz_pairs(&alphas, &betas, &basis, k, &matvec) {
                return Ok(res);
            }
        }
        if m >= max_m || m == n || beta < 1e-12 {
            return ritz_pairs(&alphas, &betas, &basis, k, &matvec).ok_or_else(|| {
                Error::Numeric(format!(
                    "Lanczos failed to converge for piece {piece_id:?} (m={m})"
                ))
            });
        }
        betas.push(beta);
        for i in 0..n {
            v[i] = w[i] / beta;
        }
    }
}

/// Solve the tridiagonal Ritz problem; return the K smallest pairs if their
/// residuals pass, `None` otherwise.
fn ritz_pairs(
    alphas: &[f64],
    betas: &[f64],
    basis: &[Vec<f64>],
    k: usize,
    matvec: &dyn Fn(&[f64], &mut [f64]),
) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = alphas.len();
    if m < k {
        return None;
    }
    let n = basis[0].len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m && i < betas.len() {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vals = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    let mut tmp = vec![0.0; n];
    for &c in order.iter().take(k) {
        let lambda = eig.eigenvalues[c];
        let mut y = vec![0.0; n];
        for (bi, b) in basis.iter().enumerate() {
            let w = eig.eigenvectors[(bi, c)];
            for i in 0..n {
                y[i] += w * b[i];
            }
        }
        normalize(&mut y);
        matvec(&y, &mut tmp);
        let res: f64 = (0..n)
            .map(|i| (tmp[i] - lambda * y[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        if res > 1e-8 {
            return None;
        }
        vals.push(lambda);
        vecs.push(y);
    }
    Some((vals, vecs))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}
