use std::path::Path;

use serde::{Deserialize, Serialize};
use yearslost::estimators::CrossFitConfig;
use yearslost::learners::Flavor;
use yearslost::simlab::{MethodSpec, MonteCarloConfig, SimConfig, TruthValues};
use yearslost::survdata::{Cause, ColumnSchema};

use crate::failure::Failure;

/// Contents of a TOML configuration file; every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub columns: ColumnSchema,
    pub estimator: CrossFitConfig,
    pub sim: SimConfig,
    pub simulate: SimulateSection,
    pub oracle: OracleSection,
    pub fd_check: FdSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Any of `cor`, `corCF`, `RF`, `RFCF`.
    pub methods: Vec<String>,
    pub n_trees: usize,
    /// Folds used by the cross-fitted arms.
    pub folds: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    /// 1-based covariates whose projection test runs in every replication.
    pub vim_covariates: Vec<usize>,
    pub test_level: f64,
    pub oracle_draws: usize,
    pub truth: Option<TruthValues>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            methods: vec!["corCF".into()],
            n_trees: 500,
            folds: 10,
            n_grid: vec![500],
            reps: 100,
            vim_covariates: Vec::new(),
            test_level: 0.05,
            oracle_draws: 100_000,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub draws: usize,
    /// Cause whose projection parameters are reported.
    pub vim_cause: Cause,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            draws: 100_000,
            vim_cause: Cause::One,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdSection {
    pub epsilon: f64,
}

impl Default for FdSection {
    fn default() -> Self {
        Self { epsilon: 1e-4 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub tstar: Option<f64>,
    pub cause: Option<u8>,
    pub flavor: Option<Flavor>,
    pub eta: Option<f64>,
}

pub const DEFAULT_SEED: u64 = 1;

pub fn load(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))
}

impl FileConfig {
    /// Applies CLI overrides and propagates the master seed and horizon.
    pub fn resolve(mut self, o: &Overrides) -> Result<(Self, u64), Failure> {
        let seed = o.seed.or(self.seed).unwrap_or(DEFAULT_SEED);
        self.seed = Some(seed);
        let e = &mut self.estimator;
        e.seed = seed;
        if let Some(k) = o.k {
            e.k = k;
        }
        if let Some(t) = o.tstar {
            e.tstar = t;
            self.sim.tstar = t;
        }
        if let Some(j) = o.cause {
            e.cause = Cause::try_from(j).map_err(|err| Failure::usage(err.to_string()))?;
        }
        if let Some(f) = o.flavor {
            e.learners.flavor = f;
        }
        if let Some(eta) = o.eta {
            e.eta = eta;
        }
        self.sim.seed = seed;
        e.validate().map_err(Failure::from)?;
        self.sim.validate().map_err(Failure::from)?;
        Ok((self, seed))
    }

    pub fn monte_carlo(&self) -> Result<MonteCarloConfig, Failure> {
        let s = &self.simulate;
        let methods = s
            .methods
            .iter()
            .map(|m| match m.to_ascii_lowercase().as_str() {
                "cor" => Ok(MethodSpec::cor(&self.sim, 1)),
                "corcf" => Ok(MethodSpec::cor(&self.sim, s.folds)),
                "rf" => Ok(MethodSpec::rf(s.n_trees, 1)),
                "rfcf" => Ok(MethodSpec::rf(s.n_trees, s.folds)),
                other => Err(Failure::usage(format!("unknown method `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let coords = s
            .vim_covariates
            .iter()
            .map(|&l| {
                if l == 0 || l > self.sim.dim {
                    Err(Failure::usage(format!(
                        "covariate {l} out of range 1..={}",
                        self.sim.dim
                    )))
                } else {
                    Ok(l - 1)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let e = &self.estimator;
        Ok(MonteCarloConfig {
            sim: self.sim.clone(),
            methods,
            n_grid: s.n_grid.clone(),
            reps: s.reps,
            master_seed: e.seed,
            cause: e.cause,
            tstar: e.tstar,
            eta: e.eta,
            level: e.level,
            min_fold_events: e.min_fold_events,
            vim_coordinates: coords,
            test_level: s.test_level,
            truth: s.truth.clone(),
            oracle_draws: s.oracle_draws,
        })
    }
}
