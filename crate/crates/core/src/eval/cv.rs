use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of trials to `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Seeded shuffle followed by a contiguous split; the first `n % k` folds
    /// get one extra trial.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::param(format!("need at least 2 folds, got {k}")));
        }
        if n < k {
            return Err(Error::data(format!("{n} trials cannot fill {k} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (base, extra) = (n / k, n % k);
        let mut assignments = vec![0; n];
        let mut pos = 0;
        for fold in 0..k {
            let size = base + usize::from(fold < extra);
            for &i in &order[pos..pos + size] {
                assignments[i] = fold;
            }
            pos += size;
        }
        let plan = Self { k, assignments, seed };
        plan.assert_partition();
        Ok(plan)
    }

    pub fn n_trials(&self) -> usize {
        self.assignments.len()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// Sorted `(train, test)` indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.n_trials()).partition(|&i| self.assignments[i] != f)
    }

    /// Panics unless every trial sits in exactly one nonempty fold and the
    /// fold sizes differ by at most one.
    pub fn assert_partition(&self) {
        let sizes = self.fold_sizes();
        assert_eq!(sizes.len(), self.k);
        assert!(sizes.iter().all(|&s| s > 0), "empty fold in {sizes:?}");
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1, "unbalanced folds {sizes:?}");
        for f in 0..self.k {
            let (train, test) = self.split(f);
            assert_eq!(train.len() + test.len(), self.n_trials());
            assert!(test.iter().all(|i| train.binary_search(i).is_err()), "fold {f} overlaps its training set");
        }
    }
}
