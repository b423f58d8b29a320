use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dataset::Cause;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimand {
    Ate,
    Vim,
}

/// Per-fold bookkeeping emitted with every estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostic {
    pub fold: usize,
    pub n_eval: usize,
    pub n_train: usize,
    /// Fold mean of the uncentered influence function values.
    pub fold_mean: f64,
    /// Training-split event counts for codes 0 (censoring), 1 and 2.
    pub train_events: [usize; 3],
    pub propensity_clips: usize,
    pub censoring_clips: usize,
    pub min_propensity: f64,
    pub min_censoring_survival: f64,
    pub learners: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimand: Estimand,
    pub cause: Cause,
    pub tstar: f64,
    pub point: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    /// Estimated influence function values, centered so their mean is zero.
    pub if_values: Vec<f64>,
    pub test_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub fold_diagnostics: Vec<FoldDiagnostic>,
    /// Extra fold draws needed because a fold came out empty.
    pub fold_redraws: u64,
}

/// Two-sided normal quantile for a confidence level, e.g. 1.95996 for 0.95.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// `2 (1 - Φ(|z|))`.
pub fn two_sided_p_value(z: f64) -> f64 {
    2.0 * Normal::standard().sf(z.abs())
}

impl EstimateReport {
    /// Assembles a report from a point estimate, the variance of the influence
    /// function and its values.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        estimand: Estimand,
        cause: Cause,
        tstar: f64,
        point: f64,
        variance: f64,
        level: f64,
        if_values: Vec<f64>,
        fold_diagnostics: Vec<FoldDiagnostic>,
        fold_redraws: u64,
    ) -> Self {
        let n = if_values.len().max(1) as f64;
        let se = (variance.max(0.0) / n).sqrt();
        let z = normal_quantile(level);
        Self {
            estimand,
            cause,
            tstar,
            point,
            se,
            ci_lower: point - z * se,
            ci_upper: point + z * se,
            level,
            if_values,
            test_stat: None,
            p_value: None,
            fold_diagnostics,
            fold_redraws,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }

    /// Attaches `point / se` and its two-sided p-value.
    pub fn with_wald_test(mut self) -> Self {
        let z = if self.se > 0.0 {
            self.point / self.se
        } else {
            f64::NAN
        };
        self.test_stat = Some(z);
        self.p_value = Some(two_sided_p_value(z));
        self
    }
}
