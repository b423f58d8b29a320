//! The nuisance bundle `(Λ̂₁, Λ̂₂, Λ̂_c, π̂)` with positivity clipping.

use std::sync::Arc;

use super::config::{Flavor, LearnerConfig};
use super::cox::fit_cox_cause_specific;
use super::forest::{fit_regression_forest, fit_survival_forest};
use super::logistic::fit_logistic_propensity;
use super::{CumulativeHazardModel, FixedHazard, PropensityModel};
use crate::error::{Error, Result};
use crate::lifeyears::{compose_capped, CauseSystem, SurvivalForm};
use crate::rng::derive_seed;
use crate::survdata::{Cause, HazardTarget, StepFn, SurvivalDataset};

/// A prediction after applying the positivity floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clipped {
    pub value: f64,
    pub clipped: bool,
}

impl Clipped {
    fn floor(raw: f64, lo: f64) -> Self {
        if raw < lo {
            Self {
                value: lo,
                clipped: true,
            }
        } else {
            Self {
                value: raw,
                clipped: false,
            }
        }
    }
}

/// Censoring survival `Ŝ_C(·|a, x)` floored at `η`.
#[derive(Debug, Clone)]
pub struct CensoringCurve {
    times: Vec<f64>,
    after: Vec<f64>,
    eta: f64,
}

impl CensoringCurve {
    pub fn new(cumhaz: &StepFn, form: SurvivalForm, eta: f64) -> Self {
        let mut s = 1.0f64;
        let after = cumhaz
            .jumps()
            .iter()
            .zip(cumhaz.values())
            .map(|(&d, &v)| {
                s = match form {
                    SurvivalForm::ProductLimit => s * (1.0 - d).max(0.0),
                    SurvivalForm::Exponential => (-v).exp(),
                };
                s
            })
            .collect();
        Self {
            times: cumhaz.times().to_vec(),
            after,
            eta,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn raw_after(&self, c: usize) -> f64 {
        if c == 0 {
            1.0
        } else {
            self.after[c - 1]
        }
    }

    /// `Ŝ_C(s-)` before flooring.
    pub fn raw_left(&self, s: f64) -> f64 {
        self.raw_after(self.times.partition_point(|&g| g < s))
    }

    /// `Ŝ_C(s-)`, floored.
    pub fn left(&self, s: f64) -> Clipped {
        Clipped::floor(self.raw_left(s), self.eta)
    }

    /// `Ŝ_C(s)`, floored.
    pub fn at(&self, s: f64) -> Clipped {
        Clipped::floor(
            self.raw_after(self.times.partition_point(|&g| g <= s)),
            self.eta,
        )
    }

    /// `Ŝ_C(g-)` at each of the sorted times `grid`, by one merge pass.
    pub fn left_on(&self, grid: &[f64]) -> Vec<Clipped> {
        let mut c = 0;
        grid.iter()
            .map(|&g| {
                while c < self.times.len() && self.times[c] < g {
                    c += 1;
                }
                Clipped::floor(self.raw_after(c), self.eta)
            })
            .collect()
    }
}

/// Fitted `ν = (Λ̂₁, Λ̂₂, Λ̂_c, π̂)` with the positivity floor `η`.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    pub lambda: [Arc<dyn CumulativeHazardModel>; 2],
    pub censoring: Arc<dyn CumulativeHazardModel>,
    pub propensity: Arc<dyn PropensityModel>,
    pub eta: f64,
    pub form: SurvivalForm,
}

impl NuisanceFit {
    pub fn new(
        lambda1: Arc<dyn CumulativeHazardModel>,
        lambda2: Arc<dyn CumulativeHazardModel>,
        censoring: Arc<dyn CumulativeHazardModel>,
        propensity: Arc<dyn PropensityModel>,
        eta: f64,
    ) -> Self {
        Self {
            lambda: [lambda1, lambda2],
            censoring,
            propensity,
            eta,
            form: SurvivalForm::ProductLimit,
        }
    }

    pub fn with_form(mut self, form: SurvivalForm) -> Self {
        self.form = form;
        self
    }

    pub fn hazard(&self, cause: Cause, a: u8, x: &[f64]) -> StepFn {
        self.lambda[cause.index()].cumulative_hazard(a, x)
    }

    /// `S`, `F₁`, `F₂` at `(a, x)` using hazard jumps up to `tstar`, with
    /// combined jumps above 1 capped.
    pub fn cause_system(&self, a: u8, x: &[f64], tstar: f64) -> Result<CauseSystem> {
        let l1 = self.hazard(Cause::One, a, x).truncated(tstar);
        let l2 = self.hazard(Cause::Two, a, x).truncated(tstar);
        Ok(compose_capped(&l1, &l2, self.form))
    }

    /// `π̂(a|x)` clipped to `[η, 1 - η]`.
    pub fn propensity(&self, a: u8, x: &[f64]) -> Clipped {
        let p1 = self.propensity.prob_treated(x);
        let raw = if a == 1 { p1 } else { 1.0 - p1 };
        if raw > 1.0 - self.eta {
            Clipped {
                value: 1.0 - self.eta,
                clipped: true,
            }
        } else {
            Clipped::floor(raw, self.eta)
        }
    }

    pub fn censoring_curve(&self, a: u8, x: &[f64], tstar: f64) -> CensoringCurve {
        CensoringCurve::new(
            &self.censoring.cumulative_hazard(a, x).truncated(tstar),
            self.form,
            self.eta,
        )
    }

    /// Which learner produced each component.
    pub fn learners(&self) -> String {
        format!(
            "lambda1={}; lambda2={}; censoring={}; propensity={}",
            self.lambda[0].describe(),
            self.lambda[1].describe(),
            self.censoring.describe(),
            self.propensity.describe()
        )
    }
}

fn cox_or_zero(
    train: &SurvivalDataset,
    target: HazardTarget,
    config: &LearnerConfig,
) -> Result<Arc<dyn CumulativeHazardModel>> {
    let map = match target {
        HazardTarget::Cause1 => &config.cox.cause1,
        HazardTarget::Cause2 => &config.cox.cause2,
        HazardTarget::Censoring => &config.cox.censoring,
    };
    match fit_cox_cause_specific(train, target, map, config.cox.grad_tol, config.cox.max_iter) {
        Ok(fit) => Ok(Arc::new(fit)),
        // A sample without censoring supports the zero censoring hazard.
        Err(Error::NoEvents) if target == HazardTarget::Censoring => {
            Ok(Arc::new(FixedHazard::zero(target)))
        }
        Err(e) => Err(e),
    }
}

pub fn fit_nuisance_bundle(
    train: &SurvivalDataset,
    config: &LearnerConfig,
    seed: u64,
) -> Result<NuisanceFit> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidData("empty training sample".into()));
    }
    let targets = [
        HazardTarget::Cause1,
        HazardTarget::Cause2,
        HazardTarget::Censoring,
    ];
    let (hazards, propensity): (
        Vec<Arc<dyn CumulativeHazardModel>>,
        Arc<dyn PropensityModel>,
    ) = match config.flavor {
        Flavor::Cor => (
            targets
                .iter()
                .map(|&t| cox_or_zero(train, t, config))
                .collect::<Result<_>>()?,
            Arc::new(fit_logistic_propensity(
                train,
                &config.propensity_features,
                config.logistic_grad_tol,
                config.logistic_max_iter,
            )?),
        ),
        Flavor::Rf => {
            let mut hazards: Vec<Arc<dyn CumulativeHazardModel>> = Vec::new();
            for (k, &t) in targets.iter().enumerate() {
                if t == HazardTarget::Censoring && train.count_events(0) == 0 {
                    hazards.push(Arc::new(FixedHazard::zero(t)));
                    continue;
                }
                let fit = fit_survival_forest(
                    train,
                    t,
                    &config.survival_forest,
                    derive_seed(seed, &[k as u64]),
                )?;
                hazards.push(Arc::new(fit));
            }
            let treated = train.count_treated();
            if treated == 0 || treated == train.n() {
                return Err(Error::SingleArm);
            }
            let x: Vec<Vec<f64>> = train.rows().iter().map(|r| r.covariates.clone()).collect();
            let a: Vec<f64> = train
                .rows()
                .iter()
                .map(|r| f64::from(r.treatment))
                .collect();
            let forest =
                fit_regression_forest(&x, &a, &config.propensity_forest, derive_seed(seed, &[3]))?;
            (hazards, Arc::new(forest))
        }
    };
    let [l1, l2, lc]: [Arc<dyn CumulativeHazardModel>; 3] = hazards
        .try_into()
        .unwrap_or_else(|_| unreachable!("three hazards fitted"));
    Ok(NuisanceFit::new(l1, l2, lc, propensity, config.eta).with_form(config.survival_form))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::ConstantPropensity;

    fn bundle(p: f64) -> NuisanceFit {
        let z = |t| Arc::new(FixedHazard::zero(t)) as Arc<dyn CumulativeHazardModel>;
        NuisanceFit::new(
            z(HazardTarget::Cause1),
            z(HazardTarget::Cause2),
            Arc::new(FixedHazard {
                target: HazardTarget::Censoring,
                cumhaz: StepFn::new(0.0, vec![1.0, 2.0], vec![0.5, 0.999]),
            }),
            Arc::new(ConstantPropensity(p)),
            0.01,
        )
    }

    #[test]
    fn propensity_clipping() {
        let nu = bundle(0.001);
        assert_eq!(
            nu.propensity(1, &[0.0]),
            Clipped {
                value: 0.01,
                clipped: true
            }
        );
        assert_eq!(
            nu.propensity(0, &[0.0]),
            Clipped {
                value: 0.99,
                clipped: true
            }
        );
        let nu = bundle(0.3);
        assert!(!nu.propensity(1, &[0.0]).clipped);
        assert!((nu.propensity(0, &[0.0]).value - 0.7).abs() < 1e-15);
    }

    #[test]
    fn censoring_floor_and_left_limits() {
        let nu = bundle(0.5);
        let c = nu.censoring_curve(0, &[0.0], 10.0);
        assert_eq!(c.left(1.0).value, 1.0);
        assert_eq!(c.at(1.0).value, 0.5);
        assert_eq!(c.left(2.0).value, 0.5);
        let after = c.at(2.0);
        assert!(after.clipped && after.value == 0.01);
        let on = c.left_on(&[0.5, 1.0, 1.5, 3.0]);
        assert_eq!(
            on.iter().map(|v| v.value).collect::<Vec<_>>(),
            vec![1.0, 1.0, 0.5, 0.01]
        );
    }
}
