use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Assignment of every rating position to one of `folds` test folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: usize,
    fold_of: Vec<usize>,
}

impl FoldPlan {
    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn fold_of(&self, position: usize) -> usize {
        self.fold_of[position]
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn test_positions(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&p| self.fold_of[p] == fold)
            .collect()
    }

    pub fn train_positions(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&p| self.fold_of[p] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles positions `0..len` with `seed` and deals them round-robin into
/// `folds` folds, so fold sizes differ by at most one.
pub fn kfold(len: usize, folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if len < folds {
        return Err(Error::InvalidArgument(format!(
            "{len} ratings cannot fill {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; len];
    for (rank, &position) in order.iter().enumerate() {
        fold_of[position] = rank % folds;
    }
    Ok(FoldPlan { folds, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_into_five() {
        let plan = kfold(10, 5, 1).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
        assert_eq!(plan, kfold(10, 5, 1).unwrap());
        let mut all: Vec<usize> = (0..5).flat_map(|f| plan.test_positions(f)).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(plan.train_positions(0).len(), 8);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(kfold(3, 5, 0).is_err());
        assert!(kfold(10, 1, 0).is_err());
    }
}
