//! The second-order remainder of the one-step ATE estimator, evaluated
//! against the exact simulation truth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::quadrature::gauss_legendre;
use super::SimConfig;
use crate::error::Result;
use crate::learners::NuisanceFit;
use crate::rng::{derive_seed, rng_from};
use crate::survdata::Cause;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderDiagnostic {
    pub cause: Cause,
    pub tstar: f64,
    pub mc_draws: usize,
    /// `P{φ_j^a(ν̂) - τ_j^a}` for `a = 0, 1`.
    pub per_arm: [f64; 2],
    pub per_arm_se: [f64; 2],
    /// Remainder of the ATE: arm 1 minus arm 0.
    pub ate: f64,
    pub ate_se: f64,
}

/// `Σ_i ∫_0^{t*} S Ĥ_ij (1 - π S_C / (π̂ Ŝ_C)) d[Λ̂_i - Λ_i]` at one `(a, x)`.
fn remainder_at(
    nu: &NuisanceFit,
    cfg: &SimConfig,
    cause: Cause,
    a: u8,
    x: &[f64],
    tstar: f64,
) -> Result<f64> {
    let sys = nu.cause_system(a, x, tstar)?;
    let kernel = sys.kernel(tstar);
    let cens = nu.censoring_curve(a, x, tstar);
    let p1 = cfg.prob_treated(x);
    let ratio = (if a == 1 { p1 } else { 1.0 - p1 }) / nu.propensity(a, x).value;
    let surv = |s: f64| (-cfg.cause1.cumulative(s, a, x) - cfg.cause2.cumulative(s, a, x)).exp();
    let weight =
        |s: f64, sc_hat: f64| 1.0 - ratio * (-cfg.censoring.cumulative(s, a, x)).exp() / sc_hat;

    // Atoms of Λ̂_i, with Ŝ_C at the left limit.
    let grid = kernel.times();
    let sc_left = cens.left_on(grid);
    let mut total = 0.0;
    for (k, &g) in grid.iter().enumerate() {
        let w = weight(g, sc_left[k].value);
        for i in Cause::BOTH {
            let d = sys.hazard_jumps(i)[k];
            if d != 0.0 {
                total += surv(g) * kernel.h_at_grid(i, cause, k) * w * d;
            }
        }
    }

    // Continuous part against dΛ_i, piecewise between the atoms of Ĥ and Ŝ_C.
    let mut cuts: Vec<f64> = grid
        .iter()
        .chain(cens.times())
        .copied()
        .filter(|&t| t > 0.0 && t < tstar)
        .collect();
    cuts.push(0.0);
    cuts.push(tstar);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    for piece in cuts.windows(2) {
        let (u, v) = (piece[0], piece[1]);
        let c = grid.partition_point(|&g| g <= u);
        let sc_hat = cens.at(u).value;
        for i in Cause::BOTH {
            let rate = cfg.hazard(i);
            total -= gauss_legendre(
                |s| {
                    surv(s)
                        * kernel.h_at_count(i, cause, s, c)
                        * weight(s, sc_hat)
                        * rate.rate(s, a, x)
                },
                u,
                v,
            );
        }
    }
    Ok(total)
}

/// The cause-1 remainder by Monte Carlo over covariate draws.
pub fn remainder_diagnostic(
    nu: &NuisanceFit,
    cfg: &SimConfig,
    tstar: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<RemainderDiagnostic> {
    remainder_diagnostic_for(nu, cfg, Cause::One, tstar, mc_draws, seed)
}

pub fn remainder_diagnostic_for(
    nu: &NuisanceFit,
    cfg: &SimConfig,
    cause: Cause,
    tstar: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<RemainderDiagnostic> {
    cfg.validate()?;
    const CHUNKS: usize = 16;
    let chunks = crate::par_map(CHUNKS, |c| -> Result<Vec<[f64; 3]>> {
        let lo = c * mc_draws / CHUNKS;
        let hi = (c + 1) * mc_draws / CHUNKS;
        let mut rng = rng_from(derive_seed(seed, &[c as u64]));
        (lo..hi)
            .map(|_| {
                let x: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r0 = remainder_at(nu, cfg, cause, 0, &x, tstar)?;
                let r1 = remainder_at(nu, cfg, cause, 1, &x, tstar)?;
                Ok([r0, r1, r1 - r0])
            })
            .collect()
    });
    let mut draws = Vec::with_capacity(mc_draws);
    for c in chunks {
        draws.extend(c?);
    }
    let n = draws.len() as f64;
    let stat = |k: usize| {
        let m = draws.iter().map(|d| d[k]).sum::<f64>() / n;
        let var = draws.iter().map(|d| (d[k] - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, (var / n).sqrt())
    };
    let (r0, s0) = stat(0);
    let (r1, s1) = stat(1);
    let (ate, ate_se) = stat(2);
    Ok(RemainderDiagnostic {
        cause,
        tstar,
        mc_draws,
        per_arm: [r0, r1],
        per_arm_se: [s0, s1],
        ate,
        ate_se,
    })
}
