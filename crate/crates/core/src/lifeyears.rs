//! Survival, cumulative incidence and years-lost functionals composed from a
//! pair of cause-specific cumulative hazards.
//!
//! All quantities live on the merged jump grid of the two hazards, so every
//! integral below is an exact finite sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::NuisanceFit;
use crate::survdata::{Cause, StepFn};

/// How the all-cause survival curve is built from the hazards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivalForm {
    /// `S(t) = Π_{s<=t} (1 - dΛ1(s) - dΛ2(s))`; makes `S + F1 + F2 = 1` exact.
    #[default]
    ProductLimit,
    /// `S(t) = exp(-Λ1(t) - Λ2(t))`.
    Exponential,
}

/// `S`, `F1`, `F2` for one stratum `(a, x)`.
#[derive(Debug, Clone)]
pub struct CauseSystem {
    times: Vec<f64>,
    dlambda: [Vec<f64>; 2],
    /// `S(g_k)`, value after the k-th jump.
    surv: Vec<f64>,
    /// `S(g_k) / S(g_k-)`.
    step_factor: Vec<f64>,
    cif: [Vec<f64>; 2],
}

pub fn compose_cause_system(lambda1: &StepFn, lambda2: &StepFn) -> Result<CauseSystem> {
    compose_with(lambda1, lambda2, SurvivalForm::ProductLimit)
}

pub fn compose_with(lambda1: &StepFn, lambda2: &StepFn, form: SurvivalForm) -> Result<CauseSystem> {
    compose_inner(lambda1, lambda2, form, false)
}

/// As [`compose_with`], but a combined jump of 1 or more is scaled down to
/// exactly 1 (all remaining mass fails there, split in proportion to the two
/// cause-specific jumps). Used for learner predictions, whose late Breslow
/// jumps multiplied by a large risk score can exceed 1.
pub fn compose_capped(lambda1: &StepFn, lambda2: &StepFn, form: SurvivalForm) -> CauseSystem {
    compose_inner(lambda1, lambda2, form, true).expect("capped composition cannot fail")
}

fn compose_inner(
    lambda1: &StepFn,
    lambda2: &StepFn,
    form: SurvivalForm,
    cap: bool,
) -> Result<CauseSystem> {
    let (t1, j1) = (lambda1.times(), lambda1.jumps());
    let (t2, j2) = (lambda2.times(), lambda2.jumps());
    let m = t1.len() + t2.len();
    let mut times = Vec::with_capacity(m);
    let mut d1 = Vec::with_capacity(m);
    let mut d2 = Vec::with_capacity(m);
    let (mut a, mut b) = (0, 0);
    while a < t1.len() || b < t2.len() {
        let ta = t1.get(a).copied().unwrap_or(f64::INFINITY);
        let tb = t2.get(b).copied().unwrap_or(f64::INFINITY);
        if ta < tb {
            times.push(ta);
            d1.push(j1[a]);
            d2.push(0.0);
            a += 1;
        } else if tb < ta {
            times.push(tb);
            d1.push(0.0);
            d2.push(j2[b]);
            b += 1;
        } else {
            times.push(ta);
            d1.push(j1[a]);
            d2.push(j2[b]);
            a += 1;
            b += 1;
        }
    }

    let mut surv = Vec::with_capacity(times.len());
    let mut step_factor = Vec::with_capacity(times.len());
    let mut f1 = Vec::with_capacity(times.len());
    let mut f2 = Vec::with_capacity(times.len());
    let (mut s_prev, mut c1, mut c2, mut cum) = (1.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..times.len() {
        let mut total = d1[k] + d2[k];
        if cap && form == SurvivalForm::ProductLimit && total > 1.0 {
            d1[k] /= total;
            d2[k] /= total;
            total = 1.0;
        }
        if form == SurvivalForm::ProductLimit && total >= 1.0 + 1e-12 {
            return Err(Error::SuperunitJump {
                time: times[k],
                jump: total,
            });
        }
        c1 += s_prev * d1[k];
        c2 += s_prev * d2[k];
        let s_next = match form {
            SurvivalForm::ProductLimit => s_prev * (1.0 - total).max(0.0),
            SurvivalForm::Exponential => {
                cum += total;
                (-cum).exp()
            }
        };
        step_factor.push(match form {
            SurvivalForm::ProductLimit => (1.0 - total).max(0.0),
            SurvivalForm::Exponential => (-total).exp(),
        });
        surv.push(s_next);
        f1.push(c1);
        f2.push(c2);
        s_prev = s_next;
    }
    Ok(CauseSystem {
        times,
        dlambda: [d1, d2],
        surv,
        step_factor,
        cif: [f1, f2],
    })
}

impl CauseSystem {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn hazard_jumps(&self, cause: Cause) -> &[f64] {
        &self.dlambda[cause.index()]
    }

    fn count_le(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    fn count_lt(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    fn surv_after(&self, c: usize) -> f64 {
        if c == 0 {
            1.0
        } else {
            self.surv[c - 1]
        }
    }

    pub fn survival(&self, t: f64) -> f64 {
        self.surv_after(self.count_le(t))
    }

    pub fn survival_left(&self, t: f64) -> f64 {
        self.surv_after(self.count_lt(t))
    }

    pub fn cif(&self, cause: Cause, t: f64) -> f64 {
        match self.count_le(t) {
            0 => 0.0,
            c => self.cif[cause.index()][c - 1],
        }
    }

    pub fn cif_left(&self, cause: Cause, t: f64) -> f64 {
        match self.count_lt(t) {
            0 => 0.0,
            c => self.cif[cause.index()][c - 1],
        }
    }

    /// `S` as a step function (baseline 1).
    pub fn survival_fn(&self) -> StepFn {
        let mut prev = 1.0;
        let jumps = self
            .surv
            .iter()
            .map(|&s| {
                let d = s - prev;
                prev = s;
                d
            })
            .collect();
        StepFn::new(1.0, self.times.clone(), jumps)
    }

    pub fn cif_fn(&self, cause: Cause) -> StepFn {
        let mut prev = 0.0;
        let jumps = self.cif[cause.index()]
            .iter()
            .map(|&f| {
                let d = f - prev;
                prev = f;
                d
            })
            .collect();
        StepFn::new(0.0, self.times.clone(), jumps)
    }

    /// `∫_0^t S(u) du`, exact.
    pub fn restricted_mean(&self, t: f64) -> f64 {
        let mut area = 0.0;
        let mut prev = 0.0;
        let mut level = 1.0;
        for (k, &s) in self.times.iter().enumerate() {
            if s >= t {
                break;
            }
            area += level * (s - prev);
            prev = s;
            level = self.surv[k];
        }
        area + level * (t - prev).max(0.0)
    }

    /// Residual tables for the H kernel at horizon `tstar`.
    pub fn kernel(&self, tstar: f64) -> KernelTable {
        let m = self.count_le(tstar);
        let mut resid = [vec![0.0; m + 1], vec![0.0; m + 1]];
        for j in 0..2 {
            for c in (0..m).rev() {
                resid[j][c] = self.dlambda[j][c] * (tstar - self.times[c])
                    + self.step_factor[c] * resid[j][c + 1];
            }
        }
        KernelTable {
            tstar,
            times: self.times[..m].to_vec(),
            resid,
        }
    }
}

/// Cause-`j` years lost before `tstar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearsLost {
    pub cause: Cause,
    pub tstar: f64,
    pub value: f64,
}

/// `L_j(0, t*) = ∫_0^{t*} F_j(u) du`, summed as rectangle areas.
pub fn years_lost(system: &CauseSystem, cause: Cause, tstar: f64) -> YearsLost {
    let f = &system.cif[cause.index()];
    let mut value = 0.0;
    for (k, &s) in system.times.iter().enumerate() {
        if s >= tstar {
            break;
        }
        let next = system
            .times
            .get(k + 1)
            .copied()
            .unwrap_or(f64::INFINITY)
            .min(tstar);
        value += f[k] * (next - s);
    }
    YearsLost {
        cause,
        tstar,
        value,
    }
}

/// Conditional residual integrals backing `H_ij(s, t*)`.
///
/// For `s` with `c` grid jumps at or before it,
/// `R_j[c] = Σ_{g_k > s, g_k <= t*} S(g_k-)/S(s) dΛ_j(g_k) (t* - g_k)`
/// equals `∫_s^{t*} (F_j(u) - F_j(s)) / S(s) du` without dividing by a small `S`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    tstar: f64,
    times: Vec<f64>,
    resid: [Vec<f64>; 2],
}

impl KernelTable {
    pub fn tstar(&self) -> f64 {
        self.tstar
    }

    /// Jump times of the system inside `[0, t*]`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `H_ij(s, t*)`, using `F_j(s)` and `S(s)` at `s` inclusive of an atom there.
    pub fn h(&self, i: Cause, j: Cause, s: f64) -> f64 {
        if s >= self.tstar {
            return 0.0;
        }
        let c = self.times.partition_point(|&g| g <= s);
        self.h_at_count(i, j, s, c)
    }

    /// `H_ij` at the `k`-th grid time.
    pub fn h_at_grid(&self, i: Cause, j: Cause, k: usize) -> f64 {
        self.h_at_count(i, j, self.times[k], k + 1)
    }

    /// `H_ij(s, t*)` for `s` with `c` grid times at or before it.
    pub(crate) fn h_at_count(&self, i: Cause, j: Cause, s: f64, c: usize) -> f64 {
        let lead = if i == j { self.tstar - s } else { 0.0 };
        lead - self.resid[j.index()][c]
    }
}

/// `H_ij(s, t*)` for a single point.
pub fn h_kernel(system: &CauseSystem, i: Cause, j: Cause, s: f64, tstar: f64) -> f64 {
    system.kernel(tstar).h(i, j, s)
}

/// As [`h_kernel`] but refuses points where `S(s-) < eta`.
pub fn h_kernel_checked(
    system: &CauseSystem,
    i: Cause,
    j: Cause,
    s: f64,
    tstar: f64,
    eta: f64,
) -> Result<f64> {
    let sl = system.survival_left(s);
    if sl < eta {
        return Err(Error::PositivityBreach {
            what: "S(s-)",
            value: sl,
            eta,
        });
    }
    Ok(h_kernel(system, i, j, s, tstar))
}

/// `τ̂_j(x) = L̂_j(0,t*|1,x) - L̂_j(0,t*|0,x)`.
pub fn cate(nu: &NuisanceFit, cause: Cause, tstar: f64, x: &[f64]) -> Result<f64> {
    let treated = nu.cause_system(1, x, tstar)?;
    let control = nu.cause_system(0, x, tstar)?;
    Ok(years_lost(&treated, cause, tstar).value - years_lost(&control, cause, tstar).value)
}
