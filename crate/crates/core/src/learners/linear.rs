//! Ordinary least squares with an intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RegressionModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

/// Least squares of `y` on `(1, x)`; minimum-norm solution when `x` is rank deficient.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidData(
            "regression needs matching, nonempty inputs".into(),
        ));
    }
    let p = x[0].len();
    let design = DMatrix::from_fn(
        x.len(),
        p + 1,
        |i, j| if j == 0 { 1.0 } else { x[i][j - 1] },
    );
    let svd = design.svd(true, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let coef = svd
        .solve(&DVector::from_column_slice(y), tol)
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(LinearFit {
        intercept: coef[0],
        slopes: coef.iter().skip(1).copied().collect(),
    })
}

impl RegressionModel for LinearFit {
    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    fn describe(&self) -> String {
        "linear".into()
    }
}
