use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

const MAX_REDRAWS: u64 = 1000;

/// Partition of `0..n` into `K` folds drawn from a multinomial with equal cell
/// probabilities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    assignment: Vec<usize>,
    k: usize,
    /// Number of redraws needed because some fold came out empty.
    pub redraws: u64,
}

/// Draws a fold plan. Empty folds trigger a redraw with the seed incremented.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || k > n {
        return Err(Error::InfeasibleFolds { n, k });
    }
    if k == 1 {
        return Ok(FoldPlan {
            assignment: vec![0; n],
            k,
            redraws: 0,
        });
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = rng_from(seed.wrapping_add(attempt));
        let assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut sizes = vec![0usize; k];
        for &f in &assignment {
            sizes[f] += 1;
        }
        if sizes.iter().all(|&s| s > 0) {
            return Ok(FoldPlan {
                assignment,
                k,
                redraws: attempt,
            });
        }
    }
    Err(Error::InfeasibleFolds { n, k })
}

impl FoldPlan {
    /// Plan from an explicit assignment (0-based fold labels).
    pub fn from_assignment(assignment: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0usize; k];
        for &f in &assignment {
            if f >= k {
                return Err(Error::InfeasibleFolds {
                    n: assignment.len(),
                    k,
                });
            }
            sizes[f] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::InfeasibleFolds {
                n: assignment.len(),
                k,
            });
        }
        Ok(Self {
            assignment,
            k,
            redraws: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `T_k`: indices evaluated in fold `k`.
    pub fn fold(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == k).collect()
    }

    /// Indices of `V_{-k}`; with a single fold this is the whole sample.
    pub fn training(&self, k: usize) -> Vec<usize> {
        if self.k == 1 {
            return (0..self.n()).collect();
        }
        (0..self.n()).filter(|&i| self.assignment[i] != k).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_plan_is_reproducible() {
        let a = make_folds(10, 2, 7).unwrap();
        let b = make_folds(10, 2, 7).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.fold(0).into_iter().chain(a.fold(1)).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn single_fold_trains_on_everything() {
        let p = make_folds(5, 1, 0).unwrap();
        assert_eq!(p.fold(0), vec![0, 1, 2, 3, 4]);
        assert_eq!(p.training(0), p.fold(0));
    }

    #[test]
    fn too_many_folds() {
        assert!(matches!(
            make_folds(3, 4, 0),
            Err(Error::InfeasibleFolds { n: 3, k: 4 })
        ));
    }

    #[test]
    fn fold_sizes_follow_multinomial() {
        // Each size is Binomial(n, 1/K): mean 1000, sd sqrt(1e4 * 0.1 * 0.9) = 30.
        let p = make_folds(10_000, 10, 11).unwrap();
        for s in p.sizes() {
            assert!((s as f64 - 1000.0).abs() <= 5.0 * 30.0, "fold size {s}");
        }
    }

    proptest! {
        #[test]
        fn folds_partition_indices(seed in any::<u64>(), n in 2usize..60, k in 2usize..6) {
            prop_assume!(k <= n);
            let p = make_folds(n, k, seed).unwrap();
            let mut seen = vec![0usize; n];
            for f in 0..k {
                let idx = p.fold(f);
                prop_assert!(!idx.is_empty());
                for i in idx {
                    seen[i] += 1;
                }
                let train = p.training(f);
                prop_assert_eq!(train.len() + p.fold(f).len(), n);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
