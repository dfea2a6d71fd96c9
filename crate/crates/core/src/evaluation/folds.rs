use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::Label;

/// `k` disjoint, sorted index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
    positives: Vec<usize>,
    n: usize,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Held-out indices of fold `i`.
    pub fn test_indices(&self, i: usize) -> &[usize] {
        &self.folds[i]
    }

    /// Everything outside fold `i`, ascending.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// `(positives, negatives)` in fold `i`.
    pub fn class_counts(&self, i: usize) -> (usize, usize) {
        (self.positives[i], self.folds[i].len() - self.positives[i])
    }
}

/// Seeded shuffle inside each class, then round-robin over folds. The
/// round-robin position carries over from one class to the next so fold sizes
/// differ by at most one overall as well as per class.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut positives = vec![0; k];
    let mut next = 0;
    for class in [Label::NonClickbait, Label::Clickbait] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {} has {} examples, fewer than {k} folds",
                class as u8,
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for idx in members {
            folds[next].push(idx);
            if class.is_positive() {
                positives[next] += 1;
            }
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan {
        folds,
        positives,
        n: labels.len(),
    })
}
