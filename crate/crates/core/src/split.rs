//! Piece-level corpus splits. Nodes are never split: a piece belongs to
//! exactly one of train/val/test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    /// Disjointness and coverage against the full piece list.
    pub fn validate(&self, corpus: &[String]) -> Result<()> {
        let mut all: Vec<&String> = self.train.iter().chain(&self.val).chain(&self.test).collect();
        let total = all.len();
        all.sort();
        all.dedup();
        if all.len() != total {
            return Err(Error::Data("split parts overlap".into()));
        }
        if total != corpus.len() || !corpus.iter().all(|p| all.binary_search(&p).is_ok()) {
            return Err(Error::Data("split does not cover the corpus exactly".into()));
        }
        Ok(())
    }
}

/// Explicit train/test lists (e.g. pieces 1-12 vs 13-24).
pub fn fixed_list(corpus: &[String], train: &[String], test: &[String]) -> Result<Split> {
    let split = Split {
        train: train.to_vec(),
        val: Vec::new(),
        test: test.to_vec(),
    };
    split.validate(corpus)?;
    Ok(split)
}

/// Seeded random half/half split with no validation part.
pub fn random_half(corpus: &[String], seed: u64) -> Result<Split> {
    if corpus.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 pieces to split, got {}",
            corpus.len()
        )));
    }
    let mut pieces = corpus.to_vec();
    pieces.sort();
    pieces.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = pieces.len() / 2;
    Ok(Split {
        train: pieces[..half].to_vec(),
        val: Vec::new(),
        test: pieces[half..].to_vec(),
    })
}

/// Seeded k-fold cross validation: each fold's pieces form one test set
/// (~1/k of the corpus), the following ~10% of pieces are validation, the
/// rest train. Test sets are pairwise disjoint and cover the corpus.
pub fn kfold(corpus: &[String], folds: usize, seed: u64) -> Result<Vec<Split>> {
    if folds < 2 {
        return Err(Error::Data("need at least 2 folds".into()));
    }
    if corpus.len() < folds {
        return Err(Error::Data(format!(
            "need at least {folds} pieces for {folds}-fold splitting, got {}",
            corpus.len()
        )));
    }
    let mut pieces = corpus.to_vec();
    pieces.sort();
    pieces.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = pieces.len();
    let val_size = ((n as f64 * 0.1).round() as usize).max(1);
    // fold boundaries: first n % folds folds get one extra piece
    let mut bounds = vec![0usize];
    for f in 0..folds {
        bounds.push(bounds[f] + n / folds + usize::from(f < n % folds));
    }
    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        let test: Vec<String> = pieces[bounds[f]..bounds[f + 1]].to_vec();
        // circular order after the test fold: validation first, then train
        let rest: Vec<String> = pieces[bounds[f + 1]..]
            .iter()
            .chain(&pieces[..bounds[f]])
            .cloned()
            .collect();
        let val_size = val_size.min(rest.len().saturating_sub(1));
        let split = Split {
            val: rest[..val_size].to_vec(),
            train: rest[val_size..].to_vec(),
            test,
        };
        split.validate(corpus)?;
        out.push(split);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pieces(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("piece{i:02}")).collect()
    }

    #[test]
    fn fixed_list_twelve_twelve() {
        let all = pieces(24);
        let s = fixed_list(&all, &all[..12], &all[12..]).unwrap();
        assert_eq!(s.train.len(), 12);
        assert_eq!(s.test.len(), 12);
        assert!(s.val.is_empty());
    }

    #[test]
    fn fixed_list_rejects_overlap() {
        let all = pieces(4);
        assert!(fixed_list(&all, &all[..3], &all[2..]).is_err());
        assert!(fixed_list(&all, &all[..2], &all[2..3]).is_err());
    }

    #[test]
    fn random_half_is_deterministic_and_even() {
        let all = pieces(24);
        let a = random_half(&all, 7).unwrap();
        let b = random_half(&all, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 12);
        assert_eq!(a.test.len(), 12);
        a.validate(&all).unwrap();
        let c = random_half(&all, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn kfold_five_on_twenty() {
        let all = pieces(20);
        let splits = kfold(&all, 5, 3).unwrap();
        assert_eq!(splits.len(), 5);
        let mut seen: Vec<String> = Vec::new();
        for s in &splits {
            assert_eq!(s.test.len(), 4);
            assert_eq!(s.val.len(), 2);
            assert_eq!(s.train.len(), 14);
            for p in &s.test {
                assert!(!seen.contains(p), "test sets must be disjoint");
                seen.push(p.clone());
            }
        }
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn too_few_pieces_error() {
        assert!(random_half(&pieces(1), 0).is_err());
        assert!(kfold(&pieces(3), 5, 0).is_err());
    }
}
