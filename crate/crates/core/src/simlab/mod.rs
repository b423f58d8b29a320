//! Simulation laboratory: the Weibull–Cox competing-risks design, numerical
//! oracles for the true parameters, the Monte Carlo harness and the
//! remainder diagnostic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{ColumnSelector, FeatureMap, LearnerConfig};
use crate::rng::rng_from;
use crate::survdata::{ObservationRecord, SurvivalDataset};

mod montecarlo;
pub mod quadrature;
mod remainder;
mod truth;

pub use montecarlo::{
    run_monte_carlo, MethodSpec, MonteCarloConfig, RejectionRate, ReplicationRecord, SimSummary,
    SummaryRow, TruthValues, VimOutcome,
};
pub use remainder::{remainder_diagnostic, remainder_diagnostic_for, RemainderDiagnostic};
pub use truth::{
    true_cate, true_nuisance, true_values_oracle, true_values_oracle_for, years_lost_closed_form,
    years_lost_quadrature, OracleValues, TrueHazard, TruePropensity,
};

/// `λ(t|a,x) = scale · shape · t^(shape-1) · exp(βᵀx + a(γ + δᵀx))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeibullHazard {
    pub scale: f64,
    pub shape: f64,
    pub beta: Vec<f64>,
    pub treatment: f64,
    pub interaction: Vec<f64>,
}

impl WeibullHazard {
    pub fn linear_predictor(&self, a: u8, x: &[f64]) -> f64 {
        let main: f64 = self.beta.iter().zip(x).map(|(b, v)| b * v).sum();
        if a == 0 {
            return main;
        }
        main + self.treatment
            + self
                .interaction
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    /// `Λ(t|a,x) = B(a,x) t^shape` with `B = scale · exp(lp)`.
    pub fn multiplier(&self, a: u8, x: &[f64]) -> f64 {
        self.scale * self.linear_predictor(a, x).exp()
    }

    pub fn cumulative(&self, t: f64, a: u8, x: &[f64]) -> f64 {
        self.multiplier(a, x) * t.powf(self.shape)
    }

    pub fn rate(&self, t: f64, a: u8, x: &[f64]) -> f64 {
        self.multiplier(a, x) * self.shape * t.powf(self.shape - 1.0)
    }

    /// The Cox design that contains the true model: nonzero terms only.
    pub fn true_design(&self) -> FeatureMap {
        let nonzero = |v: &[f64]| {
            v.iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(l, _)| l)
                .collect::<Vec<_>>()
        };
        let interactions = nonzero(&self.interaction);
        FeatureMap::new(
            nonzero(&self.beta),
            self.treatment != 0.0 || !interactions.is_empty(),
            interactions,
        )
    }

    fn validate(&self, name: &str, d: usize) -> Result<()> {
        if !(self.scale >= 0.0
            && self.scale.is_finite()
            && self.shape > 0.0
            && self.shape.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "{name}: need scale >= 0 and shape > 0"
            )));
        }
        if self.beta.len() != d || self.interaction.len() != d {
            return Err(Error::InvalidConfig(format!(
                "{name}: coefficient vectors must have length {d}"
            )));
        }
        Ok(())
    }
}

/// Data-generating process: `X ~ U[-1,1]^d`, logistic treatment, two
/// Weibull–Cox cause-specific hazards and an independent Weibull–Cox censoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dim: usize,
    pub cause1: WeibullHazard,
    pub cause2: WeibullHazard,
    pub censoring: WeibullHazard,
    pub propensity_intercept: f64,
    pub propensity: Vec<f64>,
    pub tstar: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            cause1: WeibullHazard {
                scale: 0.0025,
                shape: 2.0,
                beta: vec![-1.0, -1.0, -0.2, 0.0],
                treatment: -2.0,
                interaction: vec![0.5, -0.3, 0.0, 0.0],
            },
            cause2: WeibullHazard {
                scale: 0.00025,
                shape: 2.0,
                beta: vec![-1.0, -1.0, -0.2, 0.0],
                treatment: 1.0,
                interaction: vec![0.0; 4],
            },
            censoring: WeibullHazard {
                scale: 0.00025,
                shape: 2.0,
                beta: vec![-0.5, 0.0, 0.0, 0.0],
                treatment: 0.0,
                interaction: vec![0.0; 4],
            },
            propensity_intercept: 0.0,
            propensity: vec![0.5, 0.5, 0.0, 0.0],
            tstar: 30.0,
            seed: 20240101,
        }
    }
}

fn expit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be at least 1".into()));
        }
        self.cause1.validate("cause1", self.dim)?;
        self.cause2.validate("cause2", self.dim)?;
        self.censoring.validate("censoring", self.dim)?;
        if self.propensity.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "propensity needs {} coefficients",
                self.dim
            )));
        }
        if !(self.tstar > 0.0) {
            return Err(Error::InvalidConfig("tstar must be positive".into()));
        }
        Ok(())
    }

    pub fn hazard(&self, cause: crate::survdata::Cause) -> &WeibullHazard {
        match cause {
            crate::survdata::Cause::One => &self.cause1,
            crate::survdata::Cause::Two => &self.cause2,
        }
    }

    pub fn prob_treated(&self, x: &[f64]) -> f64 {
        expit(
            self.propensity_intercept
                + self
                    .propensity
                    .iter()
                    .zip(x)
                    .map(|(b, v)| b * v)
                    .sum::<f64>(),
        )
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.dim).map(|l| format!("X{l}")).collect()
    }

    /// Correctly specified parametric learners: Cox designs and logistic
    /// propensity holding exactly the terms with nonzero true coefficients.
    pub fn correct_learners(&self, base: LearnerConfig) -> LearnerConfig {
        let mut cfg = base;
        cfg.cox.cause1 = self.cause1.true_design();
        cfg.cox.cause2 = self.cause2.true_design();
        cfg.cox.censoring = self.censoring.true_design();
        cfg.propensity_features = ColumnSelector::Indices(
            self.propensity
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(l, _)| l)
                .collect(),
        );
        cfg
    }

    /// Event time solving `Λ₁(t) + Λ₂(t) = e`.
    fn event_time(&self, e: f64, a: u8, x: &[f64]) -> f64 {
        let (b1, b2) = (self.cause1.multiplier(a, x), self.cause2.multiplier(a, x));
        if b1 + b2 == 0.0 {
            return f64::INFINITY;
        }
        if self.cause1.shape == self.cause2.shape || b1 == 0.0 || b2 == 0.0 {
            let (b, k) = if b1 == 0.0 {
                (b2, self.cause2.shape)
            } else if b2 == 0.0 {
                (b1, self.cause1.shape)
            } else {
                (b1 + b2, self.cause1.shape)
            };
            return (e / b).powf(1.0 / k);
        }
        let total = |t: f64| b1 * t.powf(self.cause1.shape) + b2 * t.powf(self.cause2.shape);
        let mut hi = 1.0;
        while total(hi) < e {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < e {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Draws `n` observations from the design.
pub fn sample_dgp(cfg: &SimConfig, n: usize, seed: u64) -> Result<SurvivalDataset> {
    cfg.validate()?;
    let mut rng = rng_from(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = u8::from(rng.random::<f64>() < cfg.prob_treated(&x));
        let e: f64 = -(1.0 - rng.random::<f64>()).ln();
        let u: f64 = rng.random();
        let ec: f64 = -(1.0 - rng.random::<f64>()).ln();
        let t = cfg.event_time(e, a, &x);
        let bc = cfg.censoring.multiplier(a, &x);
        let c = if bc == 0.0 {
            f64::INFINITY
        } else {
            (ec / bc).powf(1.0 / cfg.censoring.shape)
        };
        let (time, event) = if t <= c {
            let (l1, l2) = (cfg.cause1.rate(t, a, &x), cfg.cause2.rate(t, a, &x));
            (t, if u * (l1 + l2) < l1 { 1 } else { 2 })
        } else {
            (c, 0)
        };
        if !time.is_finite() {
            return Err(Error::InvalidConfig(
                "design has zero event and censoring hazards".into(),
            ));
        }
        rows.push(ObservationRecord {
            time,
            event,
            treatment: a,
            covariates: x,
        });
    }
    SurvivalDataset::new(rows, cfg.covariate_names())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survdata::{read_dataset, write_dataset, ColumnSchema};

    #[test]
    fn deterministic_and_round_trips() {
        let cfg = SimConfig::default();
        let a = sample_dgp(&cfg, 300, 5).unwrap();
        assert_eq!(a, sample_dgp(&cfg, 300, 5).unwrap());
        let mut buf = Vec::new();
        write_dataset(&mut buf, &a).unwrap();
        let back = read_dataset(buf.as_slice(), &ColumnSchema::default()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn zero_censoring_scale() {
        let mut cfg = SimConfig::default();
        cfg.censoring.scale = 0.0;
        let d = sample_dgp(&cfg, 2000, 1).unwrap();
        assert_eq!(d.count_events(0), 0);
    }

    #[test]
    fn true_designs() {
        let cfg = SimConfig::default();
        let l = cfg.correct_learners(LearnerConfig::default());
        assert_eq!(
            l.cox.cause1,
            FeatureMap::new(vec![0, 1, 2], true, vec![0, 1])
        );
        assert_eq!(l.cox.cause2, FeatureMap::new(vec![0, 1, 2], true, vec![]));
        assert_eq!(l.cox.censoring, FeatureMap::new(vec![0], false, vec![]));
        assert_eq!(l.propensity_features, ColumnSelector::Indices(vec![0, 1]));
    }

    #[test]
    fn treated_fraction_matches_expected_propensity() {
        let cfg = SimConfig::default();
        let n = 100_000;
        let d = sample_dgp(&cfg, n, 77).unwrap();
        let p_hat = d.count_treated() as f64 / n as f64;
        // E[expit(0.5 X1 + 0.5 X2)] = 1/2 by symmetry of the covariate law.
        let sd = (0.25 / n as f64).sqrt();
        assert!((p_hat - 0.5).abs() <= 4.0 * sd, "{p_hat}");
    }
}
