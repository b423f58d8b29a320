//! Logistic regression for the treatment propensity.

use serde::{Deserialize, Serialize};

use super::config::ColumnSelector;
use super::cox::{inverse_diag, newton_direction};
use super::PropensityModel;
use crate::error::{Error, Result};
use crate::survdata::SurvivalDataset;

/// Bernoulli log-likelihood of `A` on `(1, x_selected)`.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    design: Vec<f64>,
    y: Vec<f64>,
    p: usize,
}

fn expit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticProblem {
    pub fn new(data: &SurvivalDataset, columns: &[usize]) -> Self {
        let p = columns.len() + 1;
        let mut design = Vec::with_capacity(data.n() * p);
        for r in data.rows() {
            design.push(1.0);
            design.extend(columns.iter().map(|&l| r.covariates[l]));
        }
        Self {
            design,
            y: data.rows().iter().map(|r| f64::from(r.treatment)).collect(),
            p,
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    fn eta(&self, beta: &[f64], i: usize) -> f64 {
        self.design[i * self.p..(i + 1) * self.p]
            .iter()
            .zip(beta)
            .map(|(z, b)| z * b)
            .sum()
    }

    /// Log-likelihood, gradient, Hessian and `max |η|`.
    pub fn evaluate(&self, beta: &[f64]) -> (f64, Vec<f64>, Vec<f64>, f64) {
        let p = self.p;
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        let mut max_eta: f64 = 0.0;
        for (i, &y) in self.y.iter().enumerate() {
            let eta = self.eta(beta, i);
            max_eta = max_eta.max(eta.abs());
            ll += y * eta - softplus(eta);
            let mu = expit(eta);
            let w = mu * (1.0 - mu);
            let z = &self.design[i * p..(i + 1) * p];
            for a in 0..p {
                grad[a] += (y - mu) * z[a];
                for b in 0..p {
                    hess[a * p + b] -= w * z[a] * z[b];
                }
            }
        }
        (ll, grad, hess, max_eta)
    }

    pub fn loglik(&self, beta: &[f64]) -> f64 {
        self.evaluate(beta).0
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        self.evaluate(beta).1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first, then one slope per selected covariate.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub columns: Vec<usize>,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + self
                .columns
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(&l, b)| b * x[l])
                .sum::<f64>()
    }
}

impl PropensityModel for LogisticFit {
    fn prob_treated(&self, x: &[f64]) -> f64 {
        expit(self.linear_predictor(x))
    }

    fn describe(&self) -> String {
        "logistic".into()
    }
}

/// Linear predictors this large mean fitted probabilities within 1e-15 of 0 or 1.
const SEPARATION_ETA: f64 = 35.0;

pub fn fit_logistic_propensity(
    data: &SurvivalDataset,
    features: &ColumnSelector,
    grad_tol: f64,
    max_iter: usize,
) -> Result<LogisticFit> {
    let treated = data.count_treated();
    if treated == 0 || treated == data.n() {
        return Err(Error::SingleArm);
    }
    let columns = features.resolve(data.covariate_names())?;
    let problem = LogisticProblem::new(data, &columns);
    let p = problem.dim();
    let mut beta = vec![0.0; p];
    let (mut ll, mut grad, mut hess, _) = problem.evaluate(&beta);
    if newton_direction(&grad, &hess).is_none() {
        return Err(Error::Singular);
    }
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iterations = 0;
    while norm(&grad) > grad_tol {
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: norm(&grad),
            });
        }
        iterations += 1;
        let Some(step) = newton_direction(&grad, &hess) else {
            return Err(Error::SeparableData);
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let (ll_c, g_c, h_c, max_eta) = problem.evaluate(&cand);
            if max_eta > SEPARATION_ETA {
                return Err(Error::SeparableData);
            }
            if ll_c >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                ll = ll_c;
                grad = g_c;
                hess = h_c;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            if norm(&grad) <= grad_tol.sqrt() {
                break;
            }
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: norm(&grad),
            });
        }
    }
    let std_errors = inverse_diag(&hess, p)
        .ok_or(Error::Singular)?
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(LogisticFit {
        coefficients: beta,
        std_errors,
        columns,
        iterations,
        grad_norm: norm(&grad),
    })
}
