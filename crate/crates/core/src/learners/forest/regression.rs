//! Regression forest with variance-reduction splits.

use super::{resample, Grower, Tree};
use crate::error::{Error, Result};
use crate::learners::config::ForestParams;
use crate::learners::{PropensityModel, RegressionModel};
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone)]
pub struct RegressionForest {
    pub params: ForestParams,
    pub mtry: usize,
    pub seed: u64,
    p: usize,
    trees: Vec<(Tree, Vec<f64>)>,
}

impl RegressionForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn dim(&self) -> usize {
        self.p
    }
}

impl RegressionModel for RegressionForest {
    fn predict(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .map(|(t, means)| means[t.leaf(x)])
            .sum::<f64>()
            / self.trees.len() as f64
    }

    fn describe(&self) -> String {
        format!("regression-forest[{} trees]", self.trees.len())
    }
}

/// A forest fitted to a 0/1 treatment target doubles as a probability forest.
impl PropensityModel for RegressionForest {
    fn prob_treated(&self, x: &[f64]) -> f64 {
        self.predict(x).clamp(0.0, 1.0)
    }

    fn describe(&self) -> String {
        format!("probability-forest[{} trees]", self.trees.len())
    }
}

/// Fits a forest of `target` on the rows of `features`.
///
/// Rows are put into a canonical order before resampling, so the fit does not
/// depend on the order in which rows are supplied.
pub fn fit_regression_forest(
    features: &[Vec<f64>],
    target: &[f64],
    params: &ForestParams,
    seed: u64,
) -> Result<RegressionForest> {
    let n = features.len();
    let p = features.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(Error::InfeasibleParams(
            "regression forest needs at least one feature".into(),
        ));
    }
    if n != target.len() || features.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidData(
            "feature rows and target lengths disagree".into(),
        ));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::InfeasibleParams(
            "n_trees and min_leaf must be positive".into(),
        ));
    }
    if n < 2 * params.min_leaf {
        return Err(Error::InfeasibleParams(format!(
            "{n} rows cannot fill two leaves of min_leaf = {}",
            params.min_leaf
        )));
    }
    let mtry = params.mtry.unwrap_or_else(|| p.div_ceil(3)).clamp(1, p);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        features[a]
            .iter()
            .zip(&features[b])
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(target[a].total_cmp(&target[b]))
    });
    let x: Vec<f64> = order
        .iter()
        .flat_map(|&i| features[i].iter().copied())
        .collect();
    let y: Vec<f64> = order.iter().map(|&i| target[i]).collect();
    let grower = Grower {
        x: &x,
        p,
        min_leaf: params.min_leaf,
        mtry,
        nsplit: params.nsplit,
    };

    let trees = crate::par_map(params.n_trees, |b| {
        let mut rng = rng_from(derive_seed(seed, &[b as u64]));
        let (rows, _) = resample(n, params.bootstrap, &mut rng);
        let mut means = Vec::new();
        let tree = grower.grow(
            rows,
            &mut rng,
            |rows, left| {
                let (mut sl, mut sr, mut nl, mut nr) = (0.0, 0.0, 0.0, 0.0);
                for (&r, &l) in rows.iter().zip(left) {
                    if l {
                        sl += y[r];
                        nl += 1.0;
                    } else {
                        sr += y[r];
                        nr += 1.0;
                    }
                }
                Some(sl * sl / nl + sr * sr / nr)
            },
            |rows| rows.iter().any(|&r| y[r] != y[rows[0]]),
            |rows| {
                means.push(rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64);
                (means.len() - 1) as u32
            },
        );
        (tree, means)
    });
    Ok(RegressionForest {
        params: params.clone(),
        mtry,
        seed,
        p,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniform(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed);
        (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn constant_target() {
        let x = uniform(100, 2, 1);
        let fit = fit_regression_forest(
            &x,
            &vec![2.5; 100],
            &ForestParams::regression_default().with_trees(20),
            3,
        )
        .unwrap();
        for xi in uniform(10, 2, 2) {
            assert_eq!(fit.predict(&xi), 2.5);
        }
    }

    #[test]
    fn identity_target_mse() {
        let x = uniform(2000, 3, 4);
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let fit = fit_regression_forest(
            &x,
            &y,
            &ForestParams::regression_default().with_trees(100),
            5,
        )
        .unwrap();
        let test = uniform(500, 3, 6);
        let mse = test
            .iter()
            .map(|r| (fit.predict(r) - r[0]).powi(2))
            .sum::<f64>()
            / 500.0;
        assert!(mse <= 0.05, "mse {mse}");
    }

    #[test]
    fn empty_features_and_too_few_rows() {
        let x = vec![vec![]; 20];
        assert!(matches!(
            fit_regression_forest(&x, &[0.0; 20], &ForestParams::regression_default(), 0),
            Err(Error::InfeasibleParams(_))
        ));
        let x = uniform(5, 1, 0);
        assert!(matches!(
            fit_regression_forest(&x, &[0.0; 5], &ForestParams::regression_default(), 0),
            Err(Error::InfeasibleParams(_))
        ));
    }

    #[test]
    fn row_permutation_invariance() {
        let x = uniform(150, 2, 7);
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1]).collect();
        let perm: Vec<usize> = (0..150).map(|i| (i * 37) % 150).collect();
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let params = ForestParams::regression_default().with_trees(25);
        let a = fit_regression_forest(&x, &y, &params, 9).unwrap();
        let b = fit_regression_forest(&xp, &yp, &params, 9).unwrap();
        for xi in uniform(20, 2, 8) {
            assert_eq!(a.predict(&xi), b.predict(&xi));
        }
    }
}
