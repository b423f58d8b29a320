//! Replicated sampling and estimation with bias, SD, SE and coverage summaries.

use serde::{Deserialize, Serialize};

use super::truth::true_values_oracle_for;
use super::{sample_dgp, SimConfig};
use crate::error::{Error, Result};
use crate::estimators::{cross_fit, CrossFitConfig};
use crate::learners::{Flavor, LearnerConfig};
use crate::rng::derive_seed;
use crate::survdata::Cause;

/// One estimator arm of the study: learners plus the number of folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub k: usize,
    pub learners: LearnerConfig,
}

impl MethodSpec {
    /// Correctly specified Cox/logistic learners; named `cor` or `corCF`.
    pub fn cor(sim: &SimConfig, k: usize) -> Self {
        let name = if k == 1 { "cor" } else { "corCF" };
        Self {
            name: name.into(),
            k,
            learners: sim.correct_learners(LearnerConfig::default()),
        }
    }

    /// Forest learners with `n_trees` per forest; named `RF` or `RFCF`.
    pub fn rf(n_trees: usize, k: usize) -> Self {
        let name = if k == 1 { "RF" } else { "RFCF" };
        Self {
            name: name.into(),
            k,
            learners: LearnerConfig::default()
                .with_flavor(Flavor::Rf)
                .with_trees(n_trees),
        }
    }

    /// `cor`, `corCF`, `RF`, `RFCF` with ten folds for the cross-fitted arms.
    pub fn standard(sim: &SimConfig, n_trees: usize) -> Vec<Self> {
        vec![
            Self::cor(sim, 1),
            Self::cor(sim, 10),
            Self::rf(n_trees, 1),
            Self::rf(n_trees, 10),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthValues {
    pub psi: f64,
    /// Projection parameters per coordinate; may be empty when no coordinate is tested.
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub sim: SimConfig,
    pub methods: Vec<MethodSpec>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub cause: Cause,
    pub tstar: f64,
    pub eta: f64,
    pub level: f64,
    pub min_fold_events: usize,
    /// 0-based coordinates whose projection test is run in every replication.
    pub vim_coordinates: Vec<usize>,
    /// Level of the two-sided projection test.
    pub test_level: f64,
    /// Known true values; computed by the oracle when absent.
    pub truth: Option<TruthValues>,
    pub oracle_draws: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            methods: vec![MethodSpec::cor(&sim, 10)],
            tstar: sim.tstar,
            sim,
            n_grid: vec![500],
            reps: 100,
            master_seed: 1,
            cause: Cause::One,
            eta: 0.01,
            level: 0.95,
            min_fold_events: 5,
            vim_coordinates: Vec::new(),
            test_level: 0.05,
            truth: None,
            oracle_draws: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimOutcome {
    pub l: usize,
    pub omega: Option<f64>,
    pub se: Option<f64>,
    pub tst: Option<f64>,
    pub rejected: Option<bool>,
    pub covered: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub method: String,
    pub n: usize,
    pub rep: usize,
    /// Seed of the simulated dataset; the estimator seed derives from the same path.
    pub data_seed: u64,
    pub point: Option<f64>,
    pub se: Option<f64>,
    pub covered: Option<bool>,
    pub vim: Vec<VimOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub l: usize,
    pub reps: usize,
    pub rate: f64,
    pub mcse: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub n: usize,
    /// Successful replications entering the aggregates.
    pub reps: usize,
    pub failures: usize,
    pub bias: f64,
    pub bias_mcse: f64,
    /// Empirical SD; undefined with fewer than two replications.
    pub sd: Option<f64>,
    pub mean_se: f64,
    pub coverage: f64,
    pub coverage_mcse: f64,
    pub rejection: Vec<RejectionRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub config: MonteCarloConfig,
    pub truth: TruthValues,
    pub rows: Vec<SummaryRow>,
    pub records: Vec<ReplicationRecord>,
}

fn proportion(hits: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

fn summarize(
    method: &str,
    n: usize,
    records: &[&ReplicationRecord],
    truth: &TruthValues,
    coords: &[usize],
) -> SummaryRow {
    let ok: Vec<&&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let r = ok.len();
    let points: Vec<f64> = ok.iter().filter_map(|x| x.point).collect();
    let mean = points.iter().sum::<f64>() / r as f64;
    let sd = (r >= 2)
        .then(|| (points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (r - 1) as f64).sqrt());
    let (coverage, coverage_mcse) =
        proportion(ok.iter().filter(|x| x.covered == Some(true)).count(), r);
    let rejection = coords
        .iter()
        .enumerate()
        .map(|(slot, &l)| {
            let outcomes: Vec<&VimOutcome> = ok
                .iter()
                .map(|x| &x.vim[slot])
                .filter(|v| v.rejected.is_some())
                .collect();
            let (rate, mcse) = proportion(
                outcomes.iter().filter(|v| v.rejected == Some(true)).count(),
                outcomes.len(),
            );
            let (coverage, _) = proportion(
                outcomes.iter().filter(|v| v.covered == Some(true)).count(),
                outcomes.len(),
            );
            RejectionRate {
                l,
                reps: outcomes.len(),
                rate,
                mcse,
                coverage,
            }
        })
        .collect();
    SummaryRow {
        method: method.into(),
        n,
        reps: r,
        failures: records.len() - r,
        bias: mean - truth.psi,
        bias_mcse: sd.map_or(f64::NAN, |s| s / (r as f64).sqrt()),
        sd,
        mean_se: ok.iter().filter_map(|x| x.se).sum::<f64>() / r as f64,
        coverage,
        coverage_mcse,
        rejection,
    }
}

fn replicate(
    cfg: &MonteCarloConfig,
    truth: &TruthValues,
    n: usize,
    rep: usize,
) -> Vec<ReplicationRecord> {
    let data_seed = derive_seed(cfg.master_seed, &[n as u64, rep as u64]);
    let blank = |method: &MethodSpec, error: String| ReplicationRecord {
        method: method.name.clone(),
        n,
        rep,
        data_seed,
        point: None,
        se: None,
        covered: None,
        vim: Vec::new(),
        error: Some(error),
    };
    let data = match sample_dgp(&cfg.sim, n, data_seed) {
        Ok(d) => d,
        Err(e) => {
            return cfg
                .methods
                .iter()
                .map(|m| blank(m, e.to_string()))
                .collect()
        }
    };
    let z = crate::survdata::normal_quantile(1.0 - cfg.test_level);
    cfg.methods
        .iter()
        .map(|method| {
            let cf = CrossFitConfig {
                k: method.k,
                seed: derive_seed(data_seed, &[1]),
                learners: method.learners.clone(),
                cause: cfg.cause,
                tstar: cfg.tstar,
                eta: cfg.eta,
                min_fold_events: cfg.min_fold_events,
                level: cfg.level,
            };
            let fit = match cross_fit(&data, &cf) {
                Ok(f) => f,
                Err(e) => return blank(method, e.to_string()),
            };
            let ate = fit.ate_report(&data);
            let vim = cfg
                .vim_coordinates
                .iter()
                .map(|&l| match fit.vim_report(&data, l) {
                    Ok(v) => VimOutcome {
                        l,
                        omega: Some(v.omega),
                        se: Some(v.report.se),
                        tst: Some(v.tst()),
                        rejected: Some(v.tst().abs() > z),
                        covered: truth.omega.get(l).map(|&w| v.report.covers(w)),
                        error: None,
                    },
                    Err(e) => VimOutcome {
                        l,
                        omega: None,
                        se: None,
                        tst: None,
                        rejected: None,
                        covered: None,
                        error: Some(e.to_string()),
                    },
                })
                .collect();
            ReplicationRecord {
                method: method.name.clone(),
                n,
                rep,
                data_seed,
                point: Some(ate.point),
                se: Some(ate.se),
                covered: Some(ate.covers(truth.psi)),
                vim,
                error: None,
            }
        })
        .collect()
}

/// Runs every method on the same simulated datasets for each `n` and replication.
pub fn run_monte_carlo(cfg: &MonteCarloConfig) -> Result<SimSummary> {
    cfg.sim.validate()?;
    if cfg.reps == 0 || cfg.methods.is_empty() || cfg.n_grid.is_empty() {
        return Err(Error::InvalidConfig(
            "need at least one replication, method and sample size".into(),
        ));
    }
    if let Some(&l) = cfg.vim_coordinates.iter().find(|&&l| l >= cfg.sim.dim) {
        return Err(Error::InvalidConfig(format!("coordinate {l} out of range")));
    }
    let truth = match &cfg.truth {
        Some(t) => t.clone(),
        None => {
            let o = true_values_oracle_for(
                &cfg.sim,
                cfg.cause,
                cfg.tstar,
                cfg.oracle_draws,
                cfg.master_seed,
            )?;
            TruthValues {
                psi: o.psi[cfg.cause.index()],
                omega: o.omega,
            }
        }
    };
    let tasks: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.reps).map(move |rep| (n, rep)))
        .collect();
    let records: Vec<ReplicationRecord> = crate::par_map(tasks.len(), |t| {
        replicate(cfg, &truth, tasks[t].0, tasks[t].1)
    })
    .into_iter()
    .flatten()
    .collect();
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        for m in &cfg.methods {
            let subset: Vec<&ReplicationRecord> = records
                .iter()
                .filter(|r| r.n == n && r.method == m.name)
                .collect();
            rows.push(summarize(&m.name, n, &subset, &truth, &cfg.vim_coordinates));
        }
    }
    Ok(SimSummary {
        config: cfg.clone(),
        truth,
        rows,
        records,
    })
}

impl SimSummary {
    pub fn row(&self, method: &str, n: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }

    /// One line per method and `n`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "method",
            "n",
            "reps",
            "failures",
            "bias",
            "bias_mcse",
            "sd",
            "mean_se",
            "coverage",
            "coverage_mcse",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for &l in &self.config.vim_coordinates {
            header.push(format!("reject_X{}", l + 1));
            header.push(format!("reject_X{}_mcse", l + 1));
        }
        w.write_record(&header)?;
        let num = |v: f64| {
            if v.is_finite() {
                v.to_string()
            } else {
                String::new()
            }
        };
        for r in &self.rows {
            let mut rec = vec![
                r.method.clone(),
                r.n.to_string(),
                r.reps.to_string(),
                r.failures.to_string(),
                num(r.bias),
                num(r.bias_mcse),
                r.sd.map_or(String::new(), num),
                num(r.mean_se),
                num(r.coverage),
                num(r.coverage_mcse),
            ];
            for q in &r.rejection {
                rec.push(num(q.rate));
                rec.push(num(q.mcse));
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(reps: usize) -> MonteCarloConfig {
        let sim = SimConfig::default();
        MonteCarloConfig {
            methods: vec![MethodSpec::cor(&sim, 2)],
            sim,
            n_grid: vec![200],
            reps,
            master_seed: 9,
            vim_coordinates: vec![0, 3],
            truth: Some(TruthValues {
                psi: -9.6135,
                omega: vec![4.949, 3.137, 0.737, 0.0],
            }),
            ..MonteCarloConfig::default()
        }
    }

    #[test]
    fn single_replication_has_no_sd() {
        let s = run_monte_carlo(&small(1)).unwrap();
        let row = &s.rows[0];
        assert_eq!(row.reps + row.failures, 1);
        if row.reps == 1 {
            assert!(row.sd.is_none());
            assert_eq!(row.bias, s.records[0].point.unwrap() - (-9.6135));
        }
        assert!(s.to_csv().unwrap().lines().count() == 2);
    }

    #[test]
    fn reproducible() {
        let a = run_monte_carlo(&small(3)).unwrap();
        let b = run_monte_carlo(&small(3)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.rows[0].coverage >= 0.0 && a.rows[0].coverage <= 1.0);
    }
}
