//! Uncentered efficient influence functions for the years-lost ATE and the
//! variable-importance projection.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::learners::{NuisanceFit, RegressionModel};
use crate::lifeyears::{years_lost, CauseSystem};
use crate::survdata::{Cause, ObservationRecord};

mod gateaux;

pub use gateaux::{
    gateaux_fd_check, gateaux_fd_direction, plug_in_eif, plug_in_functional, plug_in_nuisance,
    GateauxCheck,
};

/// Projection regressions `τ̂ʲˡ(x₋ₗ)` and `Êˡ(x₋ₗ)` for coordinate `l` (0-based).
#[derive(Debug, Clone)]
pub struct Projection {
    pub l: usize,
    pub tau: Arc<dyn RegressionModel>,
    pub mean: Arc<dyn RegressionModel>,
}

impl Projection {
    /// `x` with coordinate `l` removed.
    pub fn others(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .filter(|&(k, _)| k != self.l)
            .map(|(_, &v)| v)
            .collect()
    }

    /// `X_l - Êˡ(X₋ₗ)`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        x[self.l] - self.mean.predict(&self.others(x))
    }
}

#[derive(Debug, Clone)]
pub struct EifContext {
    pub nu: NuisanceFit,
    pub cause: Cause,
    pub tstar: f64,
    pub projection: Option<Projection>,
}

impl EifContext {
    pub fn new(nu: NuisanceFit, cause: Cause, tstar: f64) -> Result<Self> {
        if !(tstar > 0.0 && tstar.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t* must be positive, got {tstar}"
            )));
        }
        Ok(Self {
            nu,
            cause,
            tstar,
            projection: None,
        })
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = Some(projection);
        self
    }

    fn projection(&self) -> Result<&Projection> {
        self.projection.as_ref().ok_or_else(|| {
            Error::InvalidConfig(
                "projection regressions are required for the VIM influence function".into(),
            )
        })
    }
}

/// Every piece of `φ_j` for one observation, plus clipping bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EifTerms {
    pub tau: f64,
    /// `1(A=1)/π̂(1|X) - 1(A=0)/π̂(0|X)`.
    pub weight: f64,
    pub correction: f64,
    pub phi: f64,
    pub propensity: f64,
    pub propensity_clipped: bool,
    pub min_censoring: f64,
    pub censoring_clips: usize,
}

#[derive(Debug, Clone, Copy)]
struct Correction {
    value: f64,
    min_censoring: f64,
    clips: usize,
}

fn correction_on(o: &ObservationRecord, ctx: &EifContext, a: u8, sys: &CauseSystem) -> Correction {
    let j = ctx.cause;
    let tstar = ctx.tstar;
    let kernel = sys.kernel(tstar);
    let cens = ctx.nu.censoring_curve(a, &o.covariates, tstar);
    let grid = kernel.times();
    let upto = grid.partition_point(|&g| g <= o.time.min(tstar));
    let sc = cens.left_on(&grid[..upto]);
    let mut min_censoring = f64::INFINITY;
    let mut clips = 0;
    let mut comp = 0.0;
    for (k, c) in sc.iter().enumerate() {
        let mut num = 0.0;
        for i in Cause::BOTH {
            let d = sys.hazard_jumps(i)[k];
            if d != 0.0 {
                num += kernel.h_at_grid(i, j, k) * d;
            }
        }
        comp += num / c.value;
        min_censoring = min_censoring.min(c.value);
        clips += usize::from(c.clipped);
    }
    let mut jump = 0.0;
    if o.time <= tstar && o.event != 0 {
        let i = if o.event == 1 { Cause::One } else { Cause::Two };
        let c = cens.left(o.time);
        jump = kernel.h(i, j, o.time) / c.value;
        min_censoring = min_censoring.min(c.value);
        clips += usize::from(c.clipped);
    }
    Correction {
        value: jump - comp,
        min_censoring,
        clips,
    }
}

/// `Σᵢ ∫₀^{t*} Ĥᵢⱼ(s)/Ŝ_C(s-) dMᵢ(s)` evaluated at arm `a` for `o`.
pub fn martingale_correction(o: &ObservationRecord, ctx: &EifContext, a: u8) -> Result<f64> {
    let sys = ctx.nu.cause_system(a, &o.covariates, ctx.tstar)?;
    let c = correction_on(o, ctx, a, &sys);
    if c.min_censoring < ctx.nu.eta {
        return Err(Error::PositivityBreach {
            what: "S_C(s-)",
            value: c.min_censoring,
            eta: ctx.nu.eta,
        });
    }
    Ok(c.value)
}

pub fn eif_terms(o: &ObservationRecord, ctx: &EifContext) -> Result<EifTerms> {
    let x = &o.covariates;
    let treated = ctx.nu.cause_system(1, x, ctx.tstar)?;
    let control = ctx.nu.cause_system(0, x, ctx.tstar)?;
    let tau = years_lost(&treated, ctx.cause, ctx.tstar).value
        - years_lost(&control, ctx.cause, ctx.tstar).value;
    let a = o.treatment;
    let p = ctx.nu.propensity(a, x);
    let weight = if a == 1 {
        1.0 / p.value
    } else {
        -1.0 / p.value
    };
    let c = correction_on(o, ctx, a, if a == 1 { &treated } else { &control });
    Ok(EifTerms {
        tau,
        weight,
        correction: c.value,
        phi: tau + weight * c.value,
        propensity: p.value,
        propensity_clipped: p.clipped,
        min_censoring: c.min_censoring,
        censoring_clips: c.clips,
    })
}

/// `φ_j(ν̂)(O)`.
pub fn uncentered_eif_ate(o: &ObservationRecord, ctx: &EifContext) -> Result<f64> {
    Ok(eif_terms(o, ctx)?.phi)
}

/// `[φ_j - τ̂ʲˡ(X₋ₗ)] [X_l - Êˡ(X₋ₗ)]` from an already computed `φ_j`.
pub fn phi_gamma_from(phi: f64, x: &[f64], projection: &Projection) -> f64 {
    (phi - projection.tau.predict(&projection.others(x))) * projection.residual(x)
}

pub fn phi_gamma(o: &ObservationRecord, ctx: &EifContext) -> Result<f64> {
    let projection = ctx.projection()?;
    Ok(phi_gamma_from(
        uncentered_eif_ate(o, ctx)?,
        &o.covariates,
        projection,
    ))
}

/// `[X_l - Êˡ(X₋ₗ)]²`.
pub fn phi_chi(o: &ObservationRecord, ctx: &EifContext) -> Result<f64> {
    Ok(ctx.projection()?.residual(&o.covariates).powi(2))
}

/// `(φ_Γ - Γ̂ - Ω̂ (φ_χ - χ̂)) / χ̂`.
pub fn omega_contrib(
    phi_gamma: f64,
    phi_chi: f64,
    gamma: f64,
    chi: f64,
    omega: f64,
) -> Result<f64> {
    if !(chi > 0.0) {
        return Err(Error::DegenerateDenominator(chi));
    }
    Ok((phi_gamma - gamma - omega * (phi_chi - chi)) / chi)
}

pub fn eif_omega_contrib(
    o: &ObservationRecord,
    ctx: &EifContext,
    gamma: f64,
    chi: f64,
    omega: f64,
) -> Result<f64> {
    if !(chi > 0.0) {
        return Err(Error::DegenerateDenominator(chi));
    }
    omega_contrib(phi_gamma(o, ctx)?, phi_chi(o, ctx)?, gamma, chi, omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{
        ConstantPropensity, ConstantRegression, CumulativeHazardModel, FixedHazard,
    };
    use crate::lifeyears::h_kernel;
    use crate::survdata::{HazardTarget, StepFn};

    fn fixed(target: HazardTarget, f: StepFn) -> Arc<dyn CumulativeHazardModel> {
        Arc::new(FixedHazard { target, cumhaz: f })
    }

    fn ctx(l1: StepFn, l2: StepFn, lc: StepFn) -> EifContext {
        let nu = NuisanceFit::new(
            fixed(HazardTarget::Cause1, l1),
            fixed(HazardTarget::Cause2, l2),
            fixed(HazardTarget::Censoring, lc),
            Arc::new(ConstantPropensity(0.5)),
            0.01,
        );
        EifContext::new(nu, Cause::One, 5.0).unwrap()
    }

    fn obs(time: f64, event: u8, treatment: u8) -> ObservationRecord {
        ObservationRecord {
            time,
            event,
            treatment,
            covariates: vec![0.0, 0.0],
        }
    }

    #[test]
    fn zero_hazards_late_exit() {
        let c = ctx(StepFn::zero(), StepFn::zero(), StepFn::zero());
        let o = obs(7.0, 0, 1);
        assert_eq!(martingale_correction(&o, &c, 1).unwrap(), 0.0);
        // Identical arms: τ̂ = 0 so φ = 0.
        assert_eq!(uncentered_eif_ate(&o, &c).unwrap(), 0.0);
    }

    #[test]
    fn censored_observation_has_only_compensator() {
        let l1 = StepFn::new(0.0, vec![1.0, 3.0], vec![0.2, 0.1]);
        let c = ctx(l1.clone(), StepFn::zero(), StepFn::zero());
        let o = obs(2.0, 0, 0);
        let sys = c.nu.cause_system(0, &o.covariates, 5.0).unwrap();
        let expected = -h_kernel(&sys, Cause::One, Cause::One, 1.0, 5.0) * 0.2;
        assert!((martingale_correction(&o, &c, 0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn single_jump_event_at_jump() {
        let c = ctx(
            StepFn::new(0.0, vec![1.0], vec![0.2]),
            StepFn::zero(),
            StepFn::zero(),
        );
        let o = obs(1.0, 1, 1);
        let sys = c.nu.cause_system(1, &o.covariates, 5.0).unwrap();
        let h = h_kernel(&sys, Cause::One, Cause::One, 1.0, 5.0);
        let direct = h - h * 0.2;
        assert!((martingale_correction(&o, &c, 1).unwrap() - 0.8 * h).abs() < 1e-15);
        assert!((martingale_correction(&o, &c, 1).unwrap() - direct).abs() < 1e-15);
        // No jumps after t=1 inside [1, 5]: H₁₁(1, 5) = 4.
        assert!((h - 4.0).abs() < 1e-15);
    }

    #[test]
    fn censoring_weights_enter_via_left_limit() {
        let lc = StepFn::new(0.0, vec![0.5, 1.0], vec![0.5, 0.5]);
        let c = ctx(StepFn::new(0.0, vec![1.0], vec![0.2]), StepFn::zero(), lc);
        let o = obs(1.0, 1, 1);
        // S_C(1-) = 0.5 (the censoring jump at 1 happens after the event).
        assert!((martingale_correction(&o, &c, 1).unwrap() - 0.8 * 4.0 / 0.5).abs() < 1e-12);
    }

    #[test]
    fn late_exit_reduces_phi_to_tau() {
        let c = ctx(StepFn::zero(), StepFn::zero(), StepFn::zero());
        let o = obs(9.0, 1, 0);
        let t = eif_terms(&o, &c).unwrap();
        assert_eq!(t.phi, t.tau);
    }

    #[test]
    fn projection_pieces() {
        let c = ctx(StepFn::zero(), StepFn::zero(), StepFn::zero());
        // X_l fully predicted: residual 0 so φ_Γ = φ_χ = 0.
        let proj = Projection {
            l: 0,
            tau: Arc::new(ConstantRegression(0.0)),
            mean: Arc::new(ConstantRegression(0.0)),
        };
        let c = c.with_projection(proj);
        let o = obs(9.0, 0, 1);
        assert_eq!(phi_gamma(&o, &c).unwrap(), 0.0);
        assert_eq!(phi_chi(&o, &c).unwrap(), 0.0);
    }

    #[test]
    fn omega_combination() {
        assert_eq!(omega_contrib(2.0, 0.5, 2.0, 0.5, 4.0).unwrap(), 0.0);
        assert!((omega_contrib(3.0, 0.7, 1.0, 0.5, 0.0).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(
            omega_contrib(1.0, 1.0, 1.0, 0.0, 1.0),
            Err(Error::DegenerateDenominator(_))
        ));
        let c = ctx(StepFn::zero(), StepFn::zero(), StepFn::zero());
        assert!(matches!(
            eif_omega_contrib(&obs(1.0, 0, 1), &c, 0.0, 0.0, 0.0),
            Err(Error::DegenerateDenominator(_))
        ));
    }
}
