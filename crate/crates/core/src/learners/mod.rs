//! Nuisance learners: cause-specific hazards, propensity and projection regressions.

use std::fmt::Debug;

use crate::survdata::{HazardTarget, StepFn};

pub mod config;
pub mod cox;
pub mod forest;
pub mod linear;
pub mod logistic;
pub mod nelson_aalen;
pub mod nuisance;

pub use config::{ColumnSelector, CoxConfig, FeatureMap, Flavor, ForestParams, LearnerConfig};
pub use cox::{fit_cox_cause_specific, CoxFit, CoxProblem, ResolvedFeatures};
pub use forest::{fit_regression_forest, fit_survival_forest, RegressionForest, SurvivalForestFit};
pub use linear::{fit_linear, LinearFit};
pub use logistic::{fit_logistic_propensity, LogisticFit, LogisticProblem};
pub use nelson_aalen::nelson_aalen;
pub use nuisance::{fit_nuisance_bundle, CensoringCurve, Clipped, NuisanceFit};

/// `(a, x) -> Λ(·|a, x)`.
pub trait CumulativeHazardModel: Send + Sync + Debug {
    fn cumulative_hazard(&self, a: u8, x: &[f64]) -> StepFn;

    fn describe(&self) -> String;
}

/// `x -> π(1|x)`, unclipped.
pub trait PropensityModel: Send + Sync + Debug {
    fn prob_treated(&self, x: &[f64]) -> f64;

    fn describe(&self) -> String;
}

/// Real-valued regression `x -> E[Y|x]`.
pub trait RegressionModel: Send + Sync + Debug {
    fn predict(&self, x: &[f64]) -> f64;

    fn describe(&self) -> String;
}

/// The same cumulative hazard for every `(a, x)`.
#[derive(Debug, Clone)]
pub struct FixedHazard {
    pub target: HazardTarget,
    pub cumhaz: StepFn,
}

impl FixedHazard {
    pub fn zero(target: HazardTarget) -> Self {
        Self {
            target,
            cumhaz: StepFn::zero(),
        }
    }
}

impl CumulativeHazardModel for FixedHazard {
    fn cumulative_hazard(&self, _a: u8, _x: &[f64]) -> StepFn {
        self.cumhaz.clone()
    }

    fn describe(&self) -> String {
        format!("fixed[{:?}]", self.target)
    }
}

/// Propensity that ignores covariates.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPropensity(pub f64);

impl PropensityModel for ConstantPropensity {
    fn prob_treated(&self, _x: &[f64]) -> f64 {
        self.0
    }

    fn describe(&self) -> String {
        format!("constant[{}]", self.0)
    }
}

/// Regression predicting one value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRegression(pub f64);

impl RegressionModel for ConstantRegression {
    fn predict(&self, _x: &[f64]) -> f64 {
        self.0
    }

    fn describe(&self) -> String {
        format!("constant[{}]", self.0)
    }
}
