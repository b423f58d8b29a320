//! Cross-fitted one-step estimators of the years-lost ATE and the
//! variable-importance projection.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::eif::{eif_terms, omega_contrib, phi_gamma_from, EifContext, EifTerms, Projection};
use crate::error::{Error, Result};
use crate::learners::{
    fit_linear, fit_nuisance_bundle, fit_regression_forest, CensoringCurve, Flavor, LearnerConfig,
    NuisanceFit, RegressionModel,
};
use crate::lifeyears::cate;
use crate::rng::derive_seed;
use crate::survdata::{
    make_folds, Cause, Estimand, EstimateReport, FoldDiagnostic, FoldPlan, SurvivalDataset,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossFitConfig {
    /// Number of folds; 1 is the plain one-step estimator on the full sample.
    pub k: usize,
    pub seed: u64,
    pub learners: LearnerConfig,
    pub cause: Cause,
    pub tstar: f64,
    /// Positivity floor; overrides the learner configuration's floor.
    pub eta: f64,
    /// Minimum training-split events of each cause per fold.
    pub min_fold_events: usize,
    pub level: f64,
}

impl Default for CrossFitConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 1,
            learners: LearnerConfig::default(),
            cause: Cause::One,
            tstar: 30.0,
            eta: 0.01,
            min_fold_events: 5,
            level: 0.95,
        }
    }
}

impl CrossFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if !(self.tstar > 0.0 && self.tstar.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t* must be positive, got {}",
                self.tstar
            )));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "eta must lie in (0, 0.5), got {}",
                self.eta
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        self.learner_config().validate()
    }

    fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            eta: self.eta,
            ..self.learners.clone()
        }
    }

    fn plan_seed(&self) -> u64 {
        derive_seed(self.seed, &[0])
    }

    fn nuisance_seed(&self, fold: usize) -> u64 {
        derive_seed(self.seed, &[1, fold as u64])
    }

    fn projection_seed(&self, fold: usize, l: usize) -> u64 {
        derive_seed(self.seed, &[2, fold as u64, l as u64])
    }
}

/// Fitted fold nuisances and the influence-function pieces of every observation.
#[derive(Debug)]
pub struct CrossFit {
    pub config: CrossFitConfig,
    pub plan: FoldPlan,
    pub nuisances: Vec<NuisanceFit>,
    /// Per observation, evaluated with the nuisances of its own fold.
    pub terms: Vec<EifTerms>,
    train_tau: OnceLock<Vec<Vec<f64>>>,
}

fn check_fold_events(data: &SurvivalDataset, plan: &FoldPlan, min_events: usize) -> Result<()> {
    for k in 0..plan.k() {
        let train = plan.training(k);
        for cause in Cause::BOTH {
            let events = train
                .iter()
                .filter(|&&i| data.row(i).event == cause.code())
                .count();
            if events < min_events {
                return Err(Error::FoldTooSmall {
                    fold: k,
                    reason: format!(
                        "{events} cause-{} events in training split, need {min_events}",
                        cause.code()
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Fits `ν̂_{-k}` for every fold and evaluates the influence function on `V_k`.
pub fn cross_fit(data: &SurvivalDataset, cfg: &CrossFitConfig) -> Result<CrossFit> {
    cfg.validate()?;
    let plan = make_folds(data.n(), cfg.k, cfg.plan_seed())?;
    cross_fit_with_plan(data, cfg, plan)
}

pub fn cross_fit_with_plan(
    data: &SurvivalDataset,
    cfg: &CrossFitConfig,
    plan: FoldPlan,
) -> Result<CrossFit> {
    cfg.validate()?;
    if plan.n() != data.n() {
        return Err(Error::InvalidConfig(
            "fold plan does not match the sample size".into(),
        ));
    }
    check_fold_events(data, &plan, cfg.min_fold_events)?;
    let learners = cfg.learner_config();
    let nuisances = crate::par_map(plan.k(), |k| {
        fit_nuisance_bundle(
            &data.subset(&plan.training(k)),
            &learners,
            cfg.nuisance_seed(k),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    with_nuisances(data, cfg, plan, nuisances)
}

/// Evaluates the influence function with given fold nuisances, bypassing fitting.
pub fn with_nuisances(
    data: &SurvivalDataset,
    cfg: &CrossFitConfig,
    plan: FoldPlan,
    nuisances: Vec<NuisanceFit>,
) -> Result<CrossFit> {
    if nuisances.len() != plan.k() || plan.n() != data.n() {
        return Err(Error::InvalidConfig(
            "one nuisance bundle per fold is required".into(),
        ));
    }
    let contexts = nuisances
        .iter()
        .map(|nu| EifContext::new(nu.clone(), cfg.cause, cfg.tstar))
        .collect::<Result<Vec<_>>>()?;
    let assignment = plan.assignment();
    let terms = crate::par_map(data.n(), |i| {
        eif_terms(data.row(i), &contexts[assignment[i]])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(CrossFit {
        config: cfg.clone(),
        plan,
        nuisances,
        terms,
        train_tau: OnceLock::new(),
    })
}

/// `Σ_k (n_k/n) mean_{V_k}(v)`.
fn fold_weighted_mean(plan: &FoldPlan, v: &[f64]) -> (f64, Vec<f64>) {
    let n = v.len() as f64;
    let k = plan.k();
    let mut sums = vec![0.0; k];
    let sizes = plan.sizes();
    for (i, &f) in plan.assignment().iter().enumerate() {
        sums[f] += v[i];
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&sizes)
        .map(|(s, &m)| s / m as f64)
        .collect();
    let point = means
        .iter()
        .zip(&sizes)
        .map(|(m, &s)| s as f64 / n * m)
        .sum();
    (point, means)
}

impl CrossFit {
    pub fn phi(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.phi).collect()
    }

    fn diagnostics(&self, data: &SurvivalDataset, fold_means: &[f64]) -> Vec<FoldDiagnostic> {
        let sizes = self.plan.sizes();
        (0..self.plan.k())
            .map(|k| {
                let train = self.plan.training(k);
                let mut train_events = [0usize; 3];
                for &i in &train {
                    train_events[data.row(i).event as usize] += 1;
                }
                let fold: Vec<&EifTerms> = self
                    .plan
                    .fold(k)
                    .into_iter()
                    .map(|i| &self.terms[i])
                    .collect();
                FoldDiagnostic {
                    fold: k,
                    n_eval: sizes[k],
                    n_train: train.len(),
                    fold_mean: fold_means[k],
                    train_events,
                    propensity_clips: fold.iter().filter(|t| t.propensity_clipped).count(),
                    censoring_clips: fold.iter().map(|t| t.censoring_clips).sum(),
                    min_propensity: fold
                        .iter()
                        .map(|t| t.propensity)
                        .fold(f64::INFINITY, f64::min),
                    min_censoring_survival: fold
                        .iter()
                        .map(|t| t.min_censoring)
                        .fold(f64::INFINITY, f64::min),
                    learners: self.nuisances[k].learners(),
                }
            })
            .collect()
    }

    pub fn ate_report(&self, data: &SurvivalDataset) -> EstimateReport {
        let phi = self.phi();
        let (point, means) = fold_weighted_mean(&self.plan, &phi);
        let centered: Vec<f64> = phi.iter().map(|p| p - point).collect();
        let variance = centered.iter().map(|c| c * c).sum::<f64>() / centered.len() as f64;
        EstimateReport::from_parts(
            Estimand::Ate,
            self.config.cause,
            self.config.tstar,
            point,
            variance,
            self.config.level,
            centered,
            self.diagnostics(data, &means),
            self.plan.redraws,
        )
        .with_wald_test()
    }

    /// `τ̂_j(X_i)` for the training rows of every fold, under that fold's nuisances.
    fn train_tau(&self, data: &SurvivalDataset) -> Result<&Vec<Vec<f64>>> {
        if let Some(t) = self.train_tau.get() {
            return Ok(t);
        }
        let cfg = &self.config;
        let computed = (0..self.plan.k())
            .map(|k| {
                let train = self.plan.training(k);
                crate::par_map(train.len(), |r| {
                    cate(
                        &self.nuisances[k],
                        cfg.cause,
                        cfg.tstar,
                        &data.row(train[r]).covariates,
                    )
                })
                .into_iter()
                .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.train_tau.get_or_init(|| computed))
    }

    /// Projection regressions for coordinate `l` (0-based) fitted on `V_{-k}`.
    pub fn projection(&self, data: &SurvivalDataset, l: usize, k: usize) -> Result<Projection> {
        check_coordinate(data, l)?;
        let tau = &self.train_tau(data)?[k];
        fit_projection(data, &self.plan.training(k), tau, l, &self.config, k)
    }

    pub fn vim_report(&self, data: &SurvivalDataset, l: usize) -> Result<VimReport> {
        check_coordinate(data, l)?;
        let column = data.covariate_column(l);
        if column.iter().all(|&v| v == column[0]) {
            return Err(Error::DegenerateDenominator(0.0));
        }
        let projections = (0..self.plan.k())
            .map(|k| self.projection(data, l, k))
            .collect::<Result<Vec<_>>>()?;
        let assignment = self.plan.assignment();
        let mut pg = Vec::with_capacity(data.n());
        let mut pc = Vec::with_capacity(data.n());
        for (i, o) in data.rows().iter().enumerate() {
            let proj = &projections[assignment[i]];
            pg.push(phi_gamma_from(self.terms[i].phi, &o.covariates, proj));
            pc.push(proj.residual(&o.covariates).powi(2));
        }
        let (gamma, gamma_means) = fold_weighted_mean(&self.plan, &pg);
        let (chi, _) = fold_weighted_mean(&self.plan, &pc);
        if !(chi > 0.0) {
            return Err(Error::DegenerateDenominator(chi));
        }
        let omega = gamma / chi;
        let contribs = pg
            .iter()
            .zip(&pc)
            .map(|(&g, &c)| omega_contrib(g, c, gamma, chi, omega))
            .collect::<Result<Vec<f64>>>()?;
        let variance = contribs.iter().map(|c| c * c).sum::<f64>() / contribs.len() as f64;
        let report = EstimateReport::from_parts(
            Estimand::Vim,
            self.config.cause,
            self.config.tstar,
            omega,
            variance,
            self.config.level,
            contribs,
            self.diagnostics(data, &gamma_means),
            self.plan.redraws,
        )
        .with_wald_test();
        Ok(VimReport {
            report,
            l,
            covariate: data.covariate_names()[l].clone(),
            gamma,
            chi,
            omega,
            degenerate: false,
            error: None,
        })
    }
}

fn check_coordinate(data: &SurvivalDataset, l: usize) -> Result<()> {
    if data.dim() < 2 {
        return Err(Error::InvalidConfig(
            "variable importance needs at least two covariates".into(),
        ));
    }
    if l >= data.dim() {
        return Err(Error::InvalidConfig(format!(
            "coordinate {l} out of range for {} covariates",
            data.dim()
        )));
    }
    Ok(())
}

fn fit_projection(
    data: &SurvivalDataset,
    train: &[usize],
    tau: &[f64],
    l: usize,
    cfg: &CrossFitConfig,
    fold: usize,
) -> Result<Projection> {
    let others = |x: &[f64]| {
        x.iter()
            .enumerate()
            .filter(|&(k, _)| k != l)
            .map(|(_, &v)| v)
            .collect::<Vec<_>>()
    };
    let features: Vec<Vec<f64>> = train
        .iter()
        .map(|&i| others(&data.row(i).covariates))
        .collect();
    let xl: Vec<f64> = train.iter().map(|&i| data.row(i).covariates[l]).collect();
    let (tau_model, mean_model): (Arc<dyn RegressionModel>, Arc<dyn RegressionModel>) =
        match cfg.learners.flavor {
            Flavor::Cor => (
                Arc::new(fit_linear(&features, tau)?),
                Arc::new(fit_linear(&features, &xl)?),
            ),
            Flavor::Rf => {
                let seed = cfg.projection_seed(fold, l);
                let params = &cfg.learners.regression_forest;
                (
                    Arc::new(fit_regression_forest(
                        &features,
                        tau,
                        params,
                        derive_seed(seed, &[0]),
                    )?),
                    Arc::new(fit_regression_forest(
                        &features,
                        &xl,
                        params,
                        derive_seed(seed, &[1]),
                    )?),
                )
            }
        };
    Ok(Projection {
        l,
        tau: tau_model,
        mean: mean_model,
    })
}

pub fn estimate_ate(data: &SurvivalDataset, cfg: &CrossFitConfig) -> Result<EstimateReport> {
    Ok(cross_fit(data, cfg)?.ate_report(data))
}

/// `(τ̂ʲˡ, Êˡ)` for fold `k` (0-based), fitted on `V_{-k}` only.
pub fn fit_cate_projection(
    data: &SurvivalDataset,
    cfg: &CrossFitConfig,
    l: usize,
    k: usize,
) -> Result<Projection> {
    cfg.validate()?;
    check_coordinate(data, l)?;
    let plan = make_folds(data.n(), cfg.k, cfg.plan_seed())?;
    if k >= plan.k() {
        return Err(Error::InvalidConfig(format!(
            "fold {k} out of range for K = {}",
            plan.k()
        )));
    }
    check_fold_events(data, &plan, cfg.min_fold_events)?;
    let train = plan.training(k);
    let nu = fit_nuisance_bundle(
        &data.subset(&train),
        &cfg.learner_config(),
        cfg.nuisance_seed(k),
    )?;
    let tau = train
        .iter()
        .map(|&i| cate(&nu, cfg.cause, cfg.tstar, &data.row(i).covariates))
        .collect::<Result<Vec<_>>>()?;
    fit_projection(data, &train, &tau, l, cfg, k)
}

/// Projection estimate for one coordinate, flattened over its [`EstimateReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimReport {
    #[serde(flatten)]
    pub report: EstimateReport,
    /// 0-based coordinate.
    pub l: usize,
    pub covariate: String,
    pub gamma: f64,
    pub chi: f64,
    pub omega: f64,
    pub degenerate: bool,
    pub error: Option<String>,
}

impl VimReport {
    /// `Ω̂ / sqrt(σ̂²/n)`.
    pub fn tst(&self) -> f64 {
        self.report.test_stat.unwrap_or(f64::NAN)
    }

    pub fn p_value(&self) -> f64 {
        self.report.p_value.unwrap_or(f64::NAN)
    }

    fn failed(data: &SurvivalDataset, cfg: &CrossFitConfig, l: usize, err: &Error) -> Self {
        let nan = f64::NAN;
        Self {
            report: EstimateReport {
                estimand: Estimand::Vim,
                cause: cfg.cause,
                tstar: cfg.tstar,
                point: nan,
                se: nan,
                ci_lower: nan,
                ci_upper: nan,
                level: cfg.level,
                if_values: Vec::new(),
                test_stat: None,
                p_value: None,
                fold_diagnostics: Vec::new(),
                fold_redraws: 0,
            },
            l,
            covariate: data.covariate_names()[l].clone(),
            gamma: nan,
            chi: nan,
            omega: nan,
            degenerate: true,
            error: Some(err.to_string()),
        }
    }
}

pub fn estimate_vim(data: &SurvivalDataset, cfg: &CrossFitConfig, l: usize) -> Result<VimReport> {
    check_coordinate(data, l)?;
    cross_fit(data, cfg)?.vim_report(data, l)
}

/// Ascending p-value, ties by larger `|TST|`, then by coordinate; degenerate entries last.
pub fn sort_reports(reports: &mut [VimReport]) {
    reports.sort_by(|a, b| {
        a.degenerate
            .cmp(&b.degenerate)
            .then(a.p_value().total_cmp(&b.p_value()))
            .then(b.tst().abs().total_cmp(&a.tst().abs()))
            .then(a.l.cmp(&b.l))
    });
}

/// One report per coordinate, ordered by evidence of effect modification.
pub fn rank_covariates(data: &SurvivalDataset, cfg: &CrossFitConfig) -> Result<Vec<VimReport>> {
    check_coordinate(data, 0)?;
    let fit = cross_fit(data, cfg)?;
    let mut reports: Vec<VimReport> = (0..data.dim())
        .map(|l| {
            fit.vim_report(data, l)
                .unwrap_or_else(|e| VimReport::failed(data, cfg, l, &e))
        })
        .collect();
    sort_reports(&mut reports);
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivitySummary {
    pub eta: f64,
    pub tstar: f64,
    /// Minima over the sample and both arms of the unclipped predictions.
    pub min_propensity: f64,
    pub min_survival: f64,
    pub min_censoring_survival: f64,
    pub propensity_clips: usize,
    pub survival_below_floor: usize,
    pub censoring_clips: usize,
    pub flags: Vec<String>,
}

/// Positivity diagnostics of `π̂(a|X)`, `Ŝ(t*|a,X)` and `Ŝ_C(t*-|a,X)` against `η`.
pub fn positivity_check(
    nu: &NuisanceFit,
    data: &SurvivalDataset,
    tstar: f64,
    eta: f64,
) -> Result<PositivitySummary> {
    let mut s = PositivitySummary {
        eta,
        tstar,
        min_propensity: f64::INFINITY,
        min_survival: f64::INFINITY,
        min_censoring_survival: f64::INFINITY,
        propensity_clips: 0,
        survival_below_floor: 0,
        censoring_clips: 0,
        flags: Vec::new(),
    };
    for o in data.rows() {
        let x = &o.covariates;
        let p1 = nu.propensity.prob_treated(x);
        for a in 0..2u8 {
            let p = if a == 1 { p1 } else { 1.0 - p1 };
            s.min_propensity = s.min_propensity.min(p);
            s.propensity_clips += usize::from(p < eta || p > 1.0 - eta);
            let surv = nu.cause_system(a, x, tstar)?.survival(tstar);
            s.min_survival = s.min_survival.min(surv);
            s.survival_below_floor += usize::from(surv < eta);
            let cens = CensoringCurve::new(
                &nu.censoring.cumulative_hazard(a, x).truncated(tstar),
                nu.form,
                eta,
            );
            s.min_censoring_survival = s.min_censoring_survival.min(cens.raw_left(tstar));
            s.censoring_clips += usize::from(cens.left(tstar).clipped);
        }
    }
    for (count, what) in [
        (s.propensity_clips, "propensity"),
        (s.survival_below_floor, "survival"),
        (s.censoring_clips, "censoring_survival"),
    ] {
        if count > 0 {
            s.flags.push(format!(
                "{what}: {count} predictions at or beyond the floor {eta}"
            ));
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests;
