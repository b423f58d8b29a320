//! Exact-truth quantities for the simulation design.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre, integrate};
use super::{SimConfig, WeibullHazard};
use crate::error::{Error, Result};
use crate::learners::{CumulativeHazardModel, NuisanceFit, PropensityModel};
use crate::rng::{derive_seed, rng_from};
use crate::survdata::{Cause, HazardTarget, StepFn};

const QUAD_TOL: f64 = 1e-8;

fn survival(cfg: &SimConfig, s: f64, a: u8, x: &[f64]) -> f64 {
    (-cfg.cause1.cumulative(s, a, x) - cfg.cause2.cumulative(s, a, x)).exp()
}

/// `L_j(0,t*|a,x) = ∫_0^{t*} F_j(u) du = ∫_0^{t*} (t* - s) S(s) λ_j(s) ds` by adaptive quadrature.
pub fn years_lost_quadrature(
    cfg: &SimConfig,
    cause: Cause,
    a: u8,
    x: &[f64],
    tstar: f64,
) -> Result<f64> {
    let h = cfg.hazard(cause);
    let (v, _) = integrate(
        |s| (tstar - s) * survival(cfg, s, a, x) * h.rate(s, a, x),
        0.0,
        tstar,
        QUAD_TOL,
    )?;
    Ok(v)
}

/// Closed form for the case where both causes have shape 2:
/// `L_j = (B_j / c)(t* - ½ sqrt(π/c) erf(sqrt(c) t*))` with `c = B₁ + B₂`.
pub fn years_lost_closed_form(
    cfg: &SimConfig,
    cause: Cause,
    a: u8,
    x: &[f64],
    tstar: f64,
) -> Option<f64> {
    if cfg.cause1.shape != 2.0 || cfg.cause2.shape != 2.0 {
        return None;
    }
    let b = [cfg.cause1.multiplier(a, x), cfg.cause2.multiplier(a, x)];
    let c = b[0] + b[1];
    if c == 0.0 {
        return Some(0.0);
    }
    let rc = c.sqrt();
    let rmst = 0.5 * (std::f64::consts::PI / c).sqrt() * statrs::function::erf::erf(rc * tstar);
    Some(b[cause.index()] / c * (tstar - rmst))
}

/// `∫_0^{t*} S(u|a,x) du`.
fn restricted_mean(cfg: &SimConfig, a: u8, x: &[f64], tstar: f64) -> Result<f64> {
    Ok(integrate(|s| survival(cfg, s, a, x), 0.0, tstar, QUAD_TOL)?.0)
}

/// True CATE `τ_j(x)`.
pub fn true_cate(cfg: &SimConfig, cause: Cause, x: &[f64], tstar: f64) -> Result<f64> {
    Ok(years_lost_quadrature(cfg, cause, 1, x, tstar)?
        - years_lost_quadrature(cfg, cause, 0, x, tstar)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValues {
    pub tstar: f64,
    pub mc_draws: usize,
    pub seed: u64,
    /// `(ψ₁, ψ₂)`.
    pub psi: [f64; 2],
    pub psi_se: [f64; 2],
    /// Cause whose projection parameters are reported.
    pub vim_cause: Cause,
    pub gamma: Vec<f64>,
    pub gamma_se: Vec<f64>,
    pub chi: f64,
    pub omega: Vec<f64>,
    pub omega_se: Vec<f64>,
    /// `E[∫_0^{t*} S(u|0,X) - S(u|1,X) du]`, which must equal `ψ₁ + ψ₂`.
    pub restricted_mean_contrast: f64,
    pub restricted_mean_contrast_se: f64,
}

/// Running sums of a chunk of Monte Carlo draws.
#[derive(Clone)]
struct Sums {
    n: f64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Sums {
    fn new(k: usize) -> Self {
        Self {
            n: 0.0,
            first: vec![0.0; k],
            second: vec![0.0; k],
        }
    }

    fn add(&mut self, v: &[f64]) {
        self.n += 1.0;
        for (k, x) in v.iter().enumerate() {
            self.first[k] += x;
            self.second[k] += x * x;
        }
    }

    fn merge(&mut self, o: &Sums) {
        self.n += o.n;
        for k in 0..self.first.len() {
            self.first[k] += o.first[k];
            self.second[k] += o.second[k];
        }
    }

    fn mean_se(&self, k: usize) -> (f64, f64) {
        let m = self.first[k] / self.n;
        let var = (self.second[k] / self.n - m * m).max(0.0) * self.n / (self.n - 1.0).max(1.0);
        (m, (var / self.n).sqrt())
    }
}

/// ψ₁, ψ₂ by Monte Carlo over covariate draws, and the cause-1 projection
/// parameters `Ωˡ = Γˡ/χˡ` with `Γˡ = E[X_l τ(X)]` integrated over `X_l` by
/// Gauss–Legendre quadrature inside each draw.
pub fn true_values_oracle(
    cfg: &SimConfig,
    tstar: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<OracleValues> {
    true_values_oracle_for(cfg, Cause::One, tstar, mc_draws, seed)
}

pub fn true_values_oracle_for(
    cfg: &SimConfig,
    vim_cause: Cause,
    tstar: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<OracleValues> {
    cfg.validate()?;
    if mc_draws < 2 {
        return Err(Error::InvalidConfig("mc_draws must be at least 2".into()));
    }
    let d = cfg.dim;
    // Slots: τ₁, τ₂, restricted-mean contrast, then Γ samples for each l.
    let slots = 3 + d;
    const CHUNKS: usize = 64;
    let chunk_sums = crate::par_map(CHUNKS, |c| -> Result<Sums> {
        let lo = c * mc_draws / CHUNKS;
        let hi = (c + 1) * mc_draws / CHUNKS;
        let mut rng = rng_from(derive_seed(seed, &[c as u64]));
        let mut sums = Sums::new(slots);
        let mut v = vec![0.0; slots];
        for _ in lo..hi {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            v[0] = true_cate(cfg, Cause::One, &x, tstar)?;
            v[1] = true_cate(cfg, Cause::Two, &x, tstar)?;
            v[2] = restricted_mean(cfg, 0, &x, tstar)? - restricted_mean(cfg, 1, &x, tstar)?;
            for l in 0..d {
                let mut failure = None;
                let mut xl = x.clone();
                // E[X_l τ(X) | X₋ₗ] with X_l ~ U[-1, 1] independent of X₋ₗ.
                v[3 + l] = 0.5
                    * gauss_legendre(
                        |u| {
                            xl[l] = u;
                            match true_cate(cfg, vim_cause, &xl, tstar) {
                                Ok(t) => u * t,
                                Err(e) => {
                                    failure = Some(e);
                                    0.0
                                }
                            }
                        },
                        -1.0,
                        1.0,
                    );
                if let Some(e) = failure {
                    return Err(e);
                }
            }
            sums.add(&v);
        }
        Ok(sums)
    });
    let mut total = Sums::new(slots);
    for s in chunk_sums {
        total.merge(&s?);
    }
    let (psi1, se1) = total.mean_se(0);
    let (psi2, se2) = total.mean_se(1);
    let (rm, rm_se) = total.mean_se(2);
    let chi = 1.0 / 3.0;
    let (gamma, gamma_se): (Vec<f64>, Vec<f64>) = (0..d).map(|l| total.mean_se(3 + l)).unzip();
    Ok(OracleValues {
        tstar,
        mc_draws,
        seed,
        psi: [psi1, psi2],
        psi_se: [se1, se2],
        vim_cause,
        omega: gamma.iter().map(|g| g / chi).collect(),
        omega_se: gamma_se.iter().map(|s| s / chi).collect(),
        gamma,
        gamma_se,
        chi,
        restricted_mean_contrast: rm,
        restricted_mean_contrast_se: rm_se,
    })
}

/// A true Weibull–Cox cumulative hazard discretized on a uniform grid of
/// `cells` cells over `[0, horizon]`, each cell's increment placed at its midpoint.
#[derive(Debug, Clone)]
pub struct TrueHazard {
    pub spec: WeibullHazard,
    pub target: HazardTarget,
    times: Vec<f64>,
    base: Vec<f64>,
}

impl TrueHazard {
    pub fn new(spec: WeibullHazard, target: HazardTarget, horizon: f64, cells: usize) -> Self {
        let h = horizon / cells as f64;
        let edge = |k: usize| (k as f64 * h).powf(spec.shape);
        Self {
            times: (0..cells).map(|k| (k as f64 + 0.5) * h).collect(),
            base: (0..cells).map(|k| edge(k + 1) - edge(k)).collect(),
            spec,
            target,
        }
    }
}

impl CumulativeHazardModel for TrueHazard {
    fn cumulative_hazard(&self, a: u8, x: &[f64]) -> StepFn {
        let b = self.spec.multiplier(a, x);
        StepFn::from_sorted(
            0.0,
            self.times.clone(),
            self.base.iter().map(|v| v * b).collect(),
        )
    }

    fn describe(&self) -> String {
        format!("truth[{:?}, {} cells]", self.target, self.times.len())
    }
}

#[derive(Debug, Clone)]
pub struct TruePropensity {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl PropensityModel for TruePropensity {
    fn prob_treated(&self, x: &[f64]) -> f64 {
        let z = self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }

    fn describe(&self) -> String {
        "truth[propensity]".into()
    }
}

/// The exact nuisance bundle, hazards discretized on `cells` cells over `[0, t*]`.
pub fn true_nuisance(cfg: &SimConfig, tstar: f64, cells: usize, eta: f64) -> NuisanceFit {
    let hazard = |spec: &WeibullHazard, target| {
        Arc::new(TrueHazard::new(spec.clone(), target, tstar, cells))
            as Arc<dyn CumulativeHazardModel>
    };
    NuisanceFit::new(
        hazard(&cfg.cause1, HazardTarget::Cause1),
        hazard(&cfg.cause2, HazardTarget::Cause2),
        hazard(&cfg.censoring, HazardTarget::Censoring),
        Arc::new(TruePropensity {
            intercept: cfg.propensity_intercept,
            coefficients: cfg.propensity.clone(),
        }),
        eta,
    )
}
