//! Batch SMOTE in the encoder's latent space: every class is upsampled to
//! the majority count by interpolating between an anchor and one of its k
//! nearest same-class neighbors within the batch.

use rand::Rng;

use crate::tensor::Tensor2;

/// One synthetic row: `anchor + lambda * (neighbor - anchor)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthRow {
    pub anchor: usize,
    pub neighbor: usize,
    pub lambda: f64,
    pub label: u8,
}

/// The sampling choices of one pass; constant with respect to gradients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SmotePlan {
    pub rows: Vec<SynthRow>,
}

/// Augmented batch: original rows first, synthetic rows appended.
pub struct SmoteOutput {
    pub h: Tensor2,
    pub labels_aug: Vec<u8>,
    pub plan: SmotePlan,
}

/// Choose anchors, neighbors, and interpolation factors. Classes with fewer
/// than 2 batch members are skipped; k is capped at class count minus 1.
pub fn make_plan<R: Rng>(h: &Tensor2, labels: &[u8], k: usize, rng: &mut R) -> SmotePlan {
    assert_eq!(h.rows, labels.len());
    assert!(k >= 1);
    let max_label = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); max_label + 1];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mu_max = by_class.iter().map(|v| v.len()).max().unwrap_or(0);
    let mut rows = Vec::new();
    for members in by_class.iter() {
        let mu = members.len();
        if mu < 2 || mu == mu_max {
            continue;
        }
        let k_eff = k.min(mu - 1);
        // precompute each member's k nearest same-class neighbors
        let knn: Vec<Vec<usize>> = members
            .iter()
            .map(|&a| {
                let mut dists: Vec<(f64, usize)> = members
                    .iter()
                    .filter(|&&b| b != a)
                    .map(|&b| (sq_dist(h.row(a), h.row(b)), b))
                    .collect();
                dists.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                dists.into_iter().take(k_eff).map(|(_, b)| b).collect()
            })
            .collect();
        for _ in 0..mu_max - mu {
            let ai = rng.gen_range(0..mu);
            let anchor = members[ai];
            let neighbor = knn[ai][rng.gen_range(0..k_eff)];
            let lambda: f64 = rng.gen_range(0.0..1.0);
            rows.push(SynthRow {
                anchor,
                neighbor,
                lambda,
                label: labels[anchor],
            });
        }
    }
    SmotePlan { rows }
}

/// Materialize the augmented matrix for a (possibly frozen) plan.
pub fn apply_plan(h: &Tensor2, labels: &[u8], plan: &SmotePlan) -> SmoteOutput {
    let m = h.rows + plan.rows.len();
    let mut out = Tensor2::zeros(m, h.cols);
    out.data[..h.data.len()].copy_from_slice(&h.data);
    let mut labels_aug = labels.to_vec();
    for (si, s) in plan.rows.iter().enumerate() {
        let row = h.rows + si;
        for c in 0..h.cols {
            let a = h.get(s.anchor, c);
            let b = h.get(s.neighbor, c);
            out.set(row, c, a + s.lambda * (b - a));
        }
        labels_aug.push(s.label);
    }
    SmoteOutput {
        h: out,
        labels_aug,
        plan: plan.clone(),
    }
}

pub fn upsample<R: Rng>(h: &Tensor2, labels: &[u8], k: usize, rng: &mut R) -> SmoteOutput {
    let plan = make_plan(h, labels, k, rng);
    apply_plan(h, labels, &plan)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn balanced_batch_stays_untouched() {
        let h = Tensor2::from_vec(4, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let out = upsample(&h, &[0, 0, 1, 1], 3, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out.h.rows, 4);
        assert!(out.plan.rows.is_empty());
    }

    #[test]
    fn five_two_becomes_five_five() {
        let mut data = vec![0.0; 7 * 2];
        data[5 * 2] = 1.0; // minority rows 5, 6
        data[6 * 2] = 3.0;
        data[6 * 2 + 1] = 2.0;
        let h = Tensor2::from_vec(7, 2, data);
        let labels = [0, 0, 0, 0, 0, 1, 1];
        let out = upsample(&h, &labels, 3, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(out.plan.rows.len(), 3);
        assert_eq!(out.h.rows, 10);
        let ones = out.labels_aug.iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 5);
        // each synthetic row lies on the segment between rows 5 and 6
        for (si, s) in out.plan.rows.iter().enumerate() {
            assert!(s.anchor == 5 || s.anchor == 6);
            assert!(s.neighbor == 5 || s.neighbor == 6);
            let r = out.h.row(7 + si);
            for c in 0..2 {
                let lo = out.h.get(5, c).min(out.h.get(6, c));
                let hi = out.h.get(5, c).max(out.h.get(6, c));
                assert!(r[c] >= lo - 1e-12 && r[c] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn lambda_zero_copies_anchor() {
        let h = Tensor2::from_vec(3, 1, vec![5.0, -1.0, 2.0]);
        let plan = SmotePlan {
            rows: vec![SynthRow {
                anchor: 1,
                neighbor: 2,
                lambda: 0.0,
                label: 1,
            }],
        };
        let out = apply_plan(&h, &[0, 1, 1], &plan);
        assert_eq!(out.h.row(3), &[-1.0]);
    }

    #[test]
    fn singleton_class_skipped() {
        let h = Tensor2::from_vec(3, 1, vec![0.0, 1.0, 2.0]);
        let out = upsample(&h, &[0, 0, 1], 3, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(out.plan.rows.is_empty());
    }

    #[test]
    fn multiclass_all_upsampled_to_majority() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 12;
        let h = Tensor2::from_vec(n, 3, (0..n * 3).map(|i| (i as f64).sin()).collect());
        let labels = [0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2];
        let out = upsample(&h, &labels, 2, &mut rng);
        for c in 0..3u8 {
            assert_eq!(out.labels_aug.iter().filter(|&&l| l == c).count(), 6);
        }
    }
}
