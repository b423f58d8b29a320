//! Cause-specific Cox regression with Breslow ties and the Breslow baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::FeatureMap;
use super::CumulativeHazardModel;
use crate::error::{Error, Result};
use crate::survdata::{HazardTarget, StepFn, SurvivalDataset};

/// Feature map resolved to column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedFeatures {
    pub covariates: Vec<usize>,
    pub treatment: bool,
    pub interactions: Vec<usize>,
}

impl ResolvedFeatures {
    pub fn resolve(map: &FeatureMap, names: &[String]) -> Result<Self> {
        Ok(Self {
            covariates: map.covariates.resolve(names)?,
            treatment: map.treatment,
            interactions: map.interactions.resolve(names)?,
        })
    }

    pub fn len(&self) -> usize {
        self.covariates.len() + usize::from(self.treatment) + self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn expand_into(&self, a: u8, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let a = f64::from(a);
        out.extend(self.covariates.iter().map(|&l| x[l]));
        if self.treatment {
            out.push(a);
        }
        out.extend(self.interactions.iter().map(|&l| a * x[l]));
    }

    pub fn expand(&self, a: u8, x: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        self.expand_into(a, x, &mut v);
        v
    }

    pub fn names(&self, cov: &[String]) -> Vec<String> {
        let mut v: Vec<String> = self.covariates.iter().map(|&l| cov[l].clone()).collect();
        if self.treatment {
            v.push("A".into());
        }
        v.extend(self.interactions.iter().map(|&l| format!("A:{}", cov[l])));
        v
    }
}

/// Breslow partial likelihood for one hazard, with rows pre-sorted by time.
#[derive(Debug, Clone)]
pub struct CoxProblem {
    /// Centered design, row-major, sorted by descending time.
    z: Vec<f64>,
    center: Vec<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
    p: usize,
}

impl CoxProblem {
    pub fn new(data: &SurvivalDataset, target: HazardTarget, features: &ResolvedFeatures) -> Self {
        let p = features.len();
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.sort_by(|&a, &b| data.row(b).time.total_cmp(&data.row(a).time));
        let mut z = Vec::with_capacity(data.n() * p);
        let mut buf = Vec::with_capacity(p);
        for &i in &order {
            let r = data.row(i);
            features.expand_into(r.treatment, &r.covariates, &mut buf);
            z.extend_from_slice(&buf);
        }
        let n = order.len().max(1) as f64;
        let mut center = vec![0.0; p];
        for row in z.chunks(p.max(1)).take(order.len()) {
            for (c, v) in center.iter_mut().zip(row) {
                *c += v / n;
            }
        }
        if p > 0 {
            for row in z.chunks_mut(p) {
                for (v, c) in row.iter_mut().zip(&center) {
                    *v -= c;
                }
            }
        }
        let code = target.event_code();
        Self {
            z,
            center,
            times: order.iter().map(|&i| data.row(i).time).collect(),
            events: order.iter().map(|&i| data.row(i).event == code).collect(),
            p,
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.p..(i + 1) * self.p]
    }

    fn eta(&self, beta: &[f64], i: usize) -> f64 {
        self.row(i).iter().zip(beta).map(|(z, b)| z * b).sum()
    }

    /// Log partial likelihood, gradient and Hessian at `beta`.
    pub fn evaluate(&self, beta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let n = self.times.len();
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut i = 0;
        while i < n {
            let t = self.times[i];
            let mut end = i;
            while end < n && self.times[end] == t {
                let w = self.eta(beta, end).exp();
                s0 += w;
                let zr = self.row(end);
                for a in 0..p {
                    s1[a] += w * zr[a];
                    for b in 0..p {
                        s2[a * p + b] += w * zr[a] * zr[b];
                    }
                }
                end += 1;
            }
            for k in i..end {
                if !self.events[k] {
                    continue;
                }
                ll += self.eta(beta, k) - s0.ln();
                let zk = self.row(k);
                for a in 0..p {
                    let ma = s1[a] / s0;
                    grad[a] += zk[a] - ma;
                    for b in 0..p {
                        hess[a * p + b] -= s2[a * p + b] / s0 - ma * s1[b] / s0;
                    }
                }
            }
            i = end;
        }
        (ll, grad, hess)
    }

    pub fn loglik(&self, beta: &[f64]) -> f64 {
        self.evaluate(beta).0
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        self.evaluate(beta).1
    }

    /// Breslow baseline cumulative hazard for the uncentered linear predictor.
    fn breslow(&self, beta: &[f64]) -> StepFn {
        let shift: f64 = self.center.iter().zip(beta).map(|(c, b)| c * b).sum();
        let n = self.times.len();
        let mut s0 = 0.0;
        let mut times = Vec::new();
        let mut jumps = Vec::new();
        let mut i = 0;
        while i < n {
            let t = self.times[i];
            let mut end = i;
            let mut d = 0usize;
            while end < n && self.times[end] == t {
                s0 += self.eta(beta, end).exp();
                d += usize::from(self.events[end]);
                end += 1;
            }
            if d > 0 {
                times.push(t);
                jumps.push(d as f64 / (s0 * shift.exp()));
            }
            i = end;
        }
        times.reverse();
        jumps.reverse();
        StepFn::new(0.0, times, jumps)
    }
}

/// Fitted cause-specific Cox model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    pub target: HazardTarget,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub feature_names: Vec<String>,
    pub features: ResolvedFeatures,
    pub baseline_cumhaz: StepFn,
    pub iterations: usize,
    pub grad_norm: f64,
    pub loglik: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton step solving `(-H) δ = g`; `None` when `-H` is not positive definite.
pub(crate) fn newton_direction(grad: &[f64], hess: &[f64]) -> Option<Vec<f64>> {
    let p = grad.len();
    let neg_h = DMatrix::from_row_slice(p, p, hess).map(|v| -v);
    let chol = neg_h.cholesky()?;
    Some(
        chol.solve(&DVector::from_column_slice(grad))
            .iter()
            .copied()
            .collect(),
    )
}

pub(crate) fn inverse_diag(hess: &[f64], p: usize) -> Option<Vec<f64>> {
    let neg_h = DMatrix::from_row_slice(p, p, hess).map(|v| -v);
    let inv = neg_h.cholesky()?.inverse();
    Some((0..p).map(|i| inv[(i, i)]).collect())
}

pub fn fit_cox_cause_specific(
    data: &SurvivalDataset,
    target: HazardTarget,
    spec: &FeatureMap,
    grad_tol: f64,
    max_iter: usize,
) -> Result<CoxFit> {
    let features = ResolvedFeatures::resolve(spec, data.covariate_names())?;
    let problem = CoxProblem::new(data, target, &features);
    if problem.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let p = problem.dim();
    let mut beta = vec![0.0; p];
    let (mut ll, mut grad, mut hess) = problem.evaluate(&beta);
    if p > 0 && newton_direction(&grad, &hess).is_none() {
        return Err(Error::Singular);
    }
    let mut iterations = 0;
    while norm(&grad) > grad_tol {
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: norm(&grad),
            });
        }
        iterations += 1;
        let step = newton_direction(&grad, &hess).ok_or(Error::Singular)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let (ll_c, g_c, h_c) = problem.evaluate(&cand);
            if ll_c.is_finite() && ll_c >= ll - 1e-12 * ll.abs().max(1.0) {
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
            // Stalled at rounding level; accept only if essentially stationary.
            if norm(&grad) <= grad_tol.sqrt() {
                break;
            }
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: norm(&grad),
            });
        }
        if beta.iter().any(|b| b.abs() > 1e3) {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: norm(&grad),
            });
        }
    }
    let std_errors = if p > 0 {
        inverse_diag(&hess, p)
            .ok_or(Error::Singular)?
            .into_iter()
            .map(f64::sqrt)
            .collect()
    } else {
        Vec::new()
    };
    Ok(CoxFit {
        target,
        feature_names: features.names(data.covariate_names()),
        baseline_cumhaz: problem.breslow(&beta),
        coefficients: beta,
        std_errors,
        features,
        iterations,
        grad_norm: norm(&grad),
        loglik: ll,
    })
}

impl CoxFit {
    pub fn linear_predictor(&self, a: u8, x: &[f64]) -> f64 {
        self.features
            .expand(a, x)
            .iter()
            .zip(&self.coefficients)
            .map(|(z, b)| z * b)
            .sum()
    }
}

impl CumulativeHazardModel for CoxFit {
    fn cumulative_hazard(&self, a: u8, x: &[f64]) -> StepFn {
        self.baseline_cumhaz
            .scaled(self.linear_predictor(a, x).exp())
    }

    fn describe(&self) -> String {
        format!("cox[{:?}]", self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survdata::ObservationRecord;
    use rand::Rng;

    fn exp_data(n: usize, beta: f64, seed: u64) -> SurvivalDataset {
        let mut rng = crate::rng::rng_from(seed);
        let rows = (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let e: f64 = -rng.random::<f64>().ln();
                ObservationRecord {
                    time: e / (beta * x).exp(),
                    event: 1,
                    treatment: rng.random_range(0..2),
                    covariates: vec![x],
                }
            })
            .collect();
        SurvivalDataset::new(rows, vec!["x".into()]).unwrap()
    }

    fn x_only() -> FeatureMap {
        FeatureMap::new(vec![0], false, vec![])
    }

    #[test]
    fn null_effect_recovered() {
        let d = exp_data(2000, 0.0, 3);
        let fit = fit_cox_cause_specific(&d, HazardTarget::Cause1, &x_only(), 1e-8, 100).unwrap();
        assert!(fit.grad_norm <= 1e-8);
        assert!(
            fit.coefficients[0].abs() <= 3.0 * fit.std_errors[0],
            "{:?}",
            fit.coefficients
        );
    }

    #[test]
    fn breslow_matches_nelson_aalen_without_covariates() {
        let d = exp_data(50, 0.0, 5);
        let empty = FeatureMap::new(vec![], false, vec![]);
        let fit = fit_cox_cause_specific(&d, HazardTarget::Cause1, &empty, 1e-8, 100).unwrap();
        let mut times: Vec<f64> = d.rows().iter().map(|r| r.time).collect();
        times.sort_by(f64::total_cmp);
        let na: f64 = (0..times.len())
            .map(|k| 1.0 / (times.len() - k) as f64)
            .sum();
        assert!((fit.baseline_cumhaz.eval(f64::MAX) - na).abs() < 1e-12);
    }

    #[test]
    fn no_events_and_singular_design() {
        let mut d = exp_data(20, 0.5, 1);
        let rows: Vec<_> = d
            .rows()
            .iter()
            .cloned()
            .map(|mut r| {
                r.event = 0;
                r
            })
            .collect();
        let censored = SurvivalDataset::new(rows, vec!["x".into()]).unwrap();
        assert!(matches!(
            fit_cox_cause_specific(&censored, HazardTarget::Cause1, &x_only(), 1e-8, 100),
            Err(Error::NoEvents)
        ));
        d = d.map_covariate(0, |_| 1.0);
        assert!(matches!(
            fit_cox_cause_specific(&d, HazardTarget::Cause1, &x_only(), 1e-8, 100),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = exp_data(300, 0.7, 9);
        let feats = ResolvedFeatures::resolve(
            &FeatureMap::new(vec![0], true, vec![0]),
            d.covariate_names(),
        )
        .unwrap();
        let prob = CoxProblem::new(&d, HazardTarget::Cause1, &feats);
        let mut rng = crate::rng::rng_from(1);
        for _ in 0..20 {
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = prob.gradient(&beta);
            for a in 0..3 {
                let h = 1e-5;
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[a] += h;
                dn[a] -= h;
                let fd = (prob.loglik(&up) - prob.loglik(&dn)) / (2.0 * h);
                assert!(
                    (fd - g[a]).abs() <= 1e-6 * g[a].abs().max(1.0),
                    "{fd} vs {}",
                    g[a]
                );
            }
        }
    }
}
