//! Evaluation: group aggregation to onset/beat granularity and
//! precision/recall/F1 reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor2;

/// Prediction granularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Note,
    Onset,
    Beat,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Note => "note",
            Level::Onset => "onset",
            Level::Beat => "beat",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "note" => Ok(Level::Note),
            "onset" => Ok(Level::Onset),
            "beat" => Ok(Level::Beat),
            other => Err(crate::error::Error::Data(format!(
                "unknown level {other:?}; expected note, onset, or beat"
            ))),
        }
    }
}

/// Argmax class per row; the lowest index wins exact ties.
pub fn argmax_preds(probs: &Tensor2) -> Vec<u8> {
    (0..probs.rows)
        .map(|i| {
            let row = probs.row(i);
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

/// Collapse node-level predictions and labels to their groups. A group is
/// assigned a nonzero class iff any member predicts one; among competing
/// nonzero classes the highest summed probability wins (lowest class id if
/// probabilities are not supplied). Group labels follow the same any-rule.
/// Returns (group_preds, group_labels) ordered by first group appearance.
pub fn aggregate(
    node_preds: &[u8],
    node_probs: Option<&Tensor2>,
    node_labels: &[u8],
    groups: &[u32],
) -> (Vec<u8>, Vec<u8>) {
    assert_eq!(node_preds.len(), node_labels.len());
    assert_eq!(node_preds.len(), groups.len());
    let mut order: BTreeMap<u32, usize> = BTreeMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, &g) in groups.iter().enumerate() {
        let next = order.len();
        let gi = *order.entry(g).or_insert(next);
        if gi == members.len() {
            members.push(Vec::new());
        }
        members[gi].push(i);
    }
    let mut preds = Vec::with_capacity(members.len());
    let mut labels = Vec::with_capacity(members.len());
    for nodes in &members {
        let mut class_scores: BTreeMap<u8, f64> = BTreeMap::new();
        for &i in nodes {
            let c = node_preds[i];
            if c != 0 {
                let score = node_probs.map_or(0.0, |p| p.get(i, c as usize));
                *class_scores.entry(c).or_insert(0.0) += score;
            }
        }
        // BTreeMap order makes the lowest class win exact score ties
        let pred = class_scores
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            .map_or(0, |(&c, _)| c);
        preds.push(pred);
        let label = nodes.iter().map(|&i| node_labels[i]).find(|&l| l != 0).unwrap_or(0);
        labels.push(label);
    }
    (preds, labels)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub support: usize,
}

/// Metrics at one granularity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelReport {
    pub num_items: usize,
    /// Indexed by class id, class 0 included.
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean F1 over all classes, class 0 included.
    pub macro_f1: f64,
}

impl LevelReport {
    /// Positive-class F1 for the binary scheme.
    pub fn positive_f1(&self) -> f64 {
        self.per_class.get(1).map_or(0.0, |c| c.f1)
    }
}

/// Per-class precision/recall/F1 with the 0-when-undefined convention.
pub fn f1_report(preds: &[u8], labels: &[u8], num_classes: usize) -> LevelReport {
    assert_eq!(preds.len(), labels.len());
    let mut per_class = Vec::with_capacity(num_classes);
    for c in 0..num_classes as u8 {
        let (mut tp, mut fp, mut fn_, mut support) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &l) in preds.iter().zip(labels) {
            if l == c {
                support += 1;
            }
            match (p == c, l == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            support,
        });
    }
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / num_classes.max(1) as f64;
    LevelReport {
        num_items: preds.len(),
        per_class,
        macro_f1,
    }
}

/// Full report keyed by level name.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub levels: BTreeMap<String, LevelReport>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_two_thirds_case() {
        // tp=2, fp=1, fn=1 for class 1
        let preds = [1, 1, 1, 0, 0];
        let labels = [1, 1, 0, 1, 0];
        let r = f1_report(&preds, &labels, 2);
        let c = &r.per_class[1];
        assert!((c.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
    }

    #[test]
    fn perfect_predictions() {
        let v = [0, 1, 2, 1, 0];
        let r = f1_report(&v, &v, 3);
        assert!((r.macro_f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_predicted_positives_is_zero() {
        let preds = [0, 0, 0];
        let labels = [0, 1, 1];
        let r = f1_report(&preds, &labels, 2);
        assert_eq!(r.per_class[1].f1, 0.0);
    }

    #[test]
    fn any_rule_onset_aggregation() {
        // four notes at one onset, one predicted positive
        let preds = [0, 1, 0, 0];
        let labels = [0, 0, 0, 0];
        let groups = [7, 7, 7, 7];
        let (gp, gl) = aggregate(&preds, None, &labels, &groups);
        assert_eq!(gp, vec![1]);
        assert_eq!(gl, vec![0]);
    }

    #[test]
    fn all_negative_beat_stays_negative() {
        let preds = [0, 0, 0];
        let labels = [0, 1, 0];
        let groups = [0, 0, 1];
        let (gp, gl) = aggregate(&preds, None, &labels, &groups);
        assert_eq!(gp, vec![0, 0]);
        assert_eq!(gl, vec![1, 0]);
    }

    #[test]
    fn tie_broken_by_summed_probability() {
        let preds = [1, 2, 2];
        let probs = Tensor2::from_vec(
            3,
            3,
            vec![
                0.1, 0.8, 0.1, //
                0.2, 0.3, 0.5, //
                0.3, 0.3, 0.4,
            ],
        );
        let labels = [0, 0, 0];
        let groups = [0, 0, 0];
        let (gp, _) = aggregate(&preds, Some(&probs), &labels, &groups);
        // class 2 sums 0.9 > class 1's 0.8
        assert_eq!(gp, vec![2]);
    }

    #[test]
    fn aggregation_matches_brute_force_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let preds: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let groups: Vec<u32> = (0..n).map(|_| rng.gen_range(0..6)).collect();
            let (gp, gl) = aggregate(&preds, None, &labels, &groups);
            // oracle: scan each group
            let mut seen: Vec<u32> = Vec::new();
            for &g in &groups {
                if !seen.contains(&g) {
                    seen.push(g);
                }
            }
            for (gi, &g) in seen.iter().enumerate() {
                let idx: Vec<usize> = (0..n).filter(|&i| groups[i] == g).collect();
                let any_pred = idx.iter().any(|&i| preds[i] != 0);
                let any_label = idx.iter().any(|&i| labels[i] != 0);
                assert_eq!(gp[gi] != 0, any_pred);
                assert_eq!(gl[gi] != 0, any_label);
            }
        }
    }

    #[test]
    fn adding_a_positive_never_flips_negative() {
        let labels = [0u8; 4];
        let groups = [0u32, 0, 0, 0];
        let base = [0u8, 1, 0, 0];
        let more = [0u8, 1, 0, 2];
        let (gp1, _) = aggregate(&base, None, &labels, &groups);
        let (gp2, _) = aggregate(&more, None, &labels, &groups);
        assert_ne!(gp1[0], 0);
        assert_ne!(gp2[0], 0);
    }
}
