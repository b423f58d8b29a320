use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifeyears::SurvivalForm;

/// Which learners back the nuisance bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    /// Cox + logistic + linear projections.
    #[serde(rename = "cor", alias = "COR")]
    Cor,
    /// Survival forest + probability forest + regression-forest projections.
    #[serde(rename = "rf", alias = "RF")]
    Rf,
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Flavor::Cor => "cor",
            Flavor::Rf => "rf",
        })
    }
}

impl std::str::FromStr for Flavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cor" => Ok(Flavor::Cor),
            "rf" => Ok(Flavor::Rf),
            other => Err(Error::InvalidConfig(format!(
                "unknown learner flavor `{other}`"
            ))),
        }
    }
}

/// Selects covariate columns: `"all"`, `"none"`, 0-based indices or names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSelector {
    Keyword(String),
    Indices(Vec<usize>),
    Names(Vec<String>),
}

impl Default for ColumnSelector {
    fn default() -> Self {
        ColumnSelector::Keyword("all".into())
    }
}

impl ColumnSelector {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn none() -> Self {
        ColumnSelector::Keyword("none".into())
    }

    pub fn resolve(&self, names: &[String]) -> Result<Vec<usize>> {
        match self {
            ColumnSelector::Keyword(k) if k == "all" => Ok((0..names.len()).collect()),
            ColumnSelector::Keyword(k) if k == "none" => Ok(Vec::new()),
            ColumnSelector::Keyword(k) => names
                .iter()
                .position(|n| n == k)
                .map(|i| vec![i])
                .ok_or_else(|| Error::InvalidConfig(format!("unknown covariate `{k}`"))),
            ColumnSelector::Indices(ix) => {
                if let Some(bad) = ix.iter().find(|&&i| i >= names.len()) {
                    return Err(Error::InvalidConfig(format!(
                        "covariate index {bad} out of range"
                    )));
                }
                Ok(ix.clone())
            }
            ColumnSelector::Names(ns) => ns
                .iter()
                .map(|k| {
                    names
                        .iter()
                        .position(|n| n == k)
                        .ok_or_else(|| Error::InvalidConfig(format!("unknown covariate `{k}`")))
                })
                .collect(),
        }
    }
}

/// Cox design: main effects, treatment, and treatment-by-covariate interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureMap {
    pub covariates: ColumnSelector,
    pub treatment: bool,
    pub interactions: ColumnSelector,
}

impl Default for FeatureMap {
    fn default() -> Self {
        Self {
            covariates: ColumnSelector::all(),
            treatment: true,
            interactions: ColumnSelector::all(),
        }
    }
}

impl FeatureMap {
    pub fn new(covariates: Vec<usize>, treatment: bool, interactions: Vec<usize>) -> Self {
        Self {
            covariates: ColumnSelector::Indices(covariates),
            treatment,
            interactions: ColumnSelector::Indices(interactions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoxConfig {
    pub cause1: FeatureMap,
    pub cause2: FeatureMap,
    pub censoring: FeatureMap,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for CoxConfig {
    fn default() -> Self {
        Self {
            cause1: FeatureMap::default(),
            cause2: FeatureMap::default(),
            censoring: FeatureMap::default(),
            grad_tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Hyperparameters shared by the survival and regression forests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` picks the forest kind's default.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    /// Random split points tried per candidate feature; 0 means every distinct value.
    pub nsplit: usize,
    pub bootstrap: bool,
    pub oob_concordance: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf: 15,
            nsplit: 10,
            bootstrap: true,
            oob_concordance: true,
        }
    }
}

impl ForestParams {
    pub fn regression_default() -> Self {
        Self {
            min_leaf: 5,
            oob_concordance: false,
            ..Self::default()
        }
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub flavor: Flavor,
    /// Positivity floor for propensities and censoring survival.
    pub eta: f64,
    pub survival_form: SurvivalForm,
    pub cox: CoxConfig,
    pub propensity_features: ColumnSelector,
    pub logistic_grad_tol: f64,
    pub logistic_max_iter: usize,
    pub survival_forest: ForestParams,
    pub propensity_forest: ForestParams,
    pub regression_forest: ForestParams,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            flavor: Flavor::Cor,
            eta: 0.01,
            survival_form: SurvivalForm::ProductLimit,
            cox: CoxConfig::default(),
            propensity_features: ColumnSelector::all(),
            logistic_grad_tol: 1e-8,
            logistic_max_iter: 100,
            survival_forest: ForestParams::default(),
            propensity_forest: ForestParams::regression_default(),
            regression_forest: ForestParams::regression_default(),
        }
    }
}

impl LearnerConfig {
    pub fn with_flavor(mut self, flavor: Flavor) -> Self {
        self.flavor = flavor;
        self
    }

    /// Same number of trees in every forest.
    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.survival_forest.n_trees = n_trees;
        self.propensity_forest.n_trees = n_trees;
        self.regression_forest.n_trees = n_trees;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "eta must lie in (0, 0.5), got {}",
                self.eta
            )));
        }
        for (name, p) in [
            ("survival_forest", &self.survival_forest),
            ("propensity_forest", &self.propensity_forest),
            ("regression_forest", &self.regression_forest),
        ] {
            if p.n_trees == 0 || p.min_leaf == 0 {
                return Err(Error::InvalidConfig(format!(
                    "{name}: n_trees and min_leaf must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selectors_resolve() {
        let names: Vec<String> = ["age", "sex", "bmi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            ColumnSelector::all().resolve(&names).unwrap(),
            vec![0, 1, 2]
        );
        assert!(ColumnSelector::none().resolve(&names).unwrap().is_empty());
        assert_eq!(
            ColumnSelector::Names(vec!["bmi".into()])
                .resolve(&names)
                .unwrap(),
            vec![2]
        );
        assert!(ColumnSelector::Indices(vec![3]).resolve(&names).is_err());
    }

    #[test]
    fn flavor_parses_both_spellings() {
        let c: LearnerConfig = serde_json::from_str(r#"{"flavor": "RF"}"#).unwrap();
        assert_eq!(c.flavor, Flavor::Rf);
        assert_eq!("cor".parse::<Flavor>().unwrap(), Flavor::Cor);
        assert!(LearnerConfig {
            eta: 0.7,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
