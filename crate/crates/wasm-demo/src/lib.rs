//! Browser bindings: true years-lost curves, CATE profiles and a
//! simulate-then-estimate ATE round trip on the built-in design.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use yearslost::estimators::{estimate_ate, CrossFitConfig};
use yearslost::simlab::{
    sample_dgp, true_cate, true_values_oracle, years_lost_closed_form, years_lost_quadrature,
    SimConfig,
};
use yearslost::survdata::Cause;

#[derive(Debug, Serialize)]
pub struct Curves {
    pub t: Vec<f64>,
    /// `S(t|a,x)` for `a = 0, 1`.
    pub survival: [Vec<f64>; 2],
    /// `L_j(t|a,x)` indexed by cause then arm.
    pub years_lost: [[Vec<f64>; 2]; 2],
}

#[derive(Debug, Serialize)]
pub struct Profile {
    pub l: usize,
    pub grid: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct AteDemo {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub events: [usize; 3],
    pub point: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub truth: f64,
    pub truth_se: f64,
}

fn check_x(cfg: &SimConfig, x: &[f64]) -> Result<(), String> {
    if x.len() != cfg.dim {
        return Err(format!("expected {} covariates, got {}", cfg.dim, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err("covariates must be finite".into());
    }
    Ok(())
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let m = points.max(2);
    (0..m)
        .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
        .collect()
}

fn years_lost(cfg: &SimConfig, cause: Cause, a: u8, x: &[f64], t: f64) -> Result<f64, String> {
    match years_lost_closed_form(cfg, cause, a, x, t) {
        Some(v) => Ok(v),
        None => years_lost_quadrature(cfg, cause, a, x, t).map_err(|e| e.to_string()),
    }
}

/// Survival and years lost on `[0, horizon]` at covariate vector `x`.
pub fn true_curves(x: &[f64], horizon: f64, points: usize) -> Result<Curves, String> {
    let cfg = SimConfig::default();
    check_x(&cfg, x)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err("horizon must be positive".into());
    }
    let t = grid(0.0, horizon, points);
    let surv = |a: u8| {
        t.iter()
            .map(|&s| (-cfg.cause1.cumulative(s, a, x) - cfg.cause2.cumulative(s, a, x)).exp())
            .collect()
    };
    let lost = |cause: Cause, a: u8| {
        t.iter()
            .map(|&s| years_lost(&cfg, cause, a, x, s))
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(Curves {
        survival: [surv(0), surv(1)],
        years_lost: [
            [lost(Cause::One, 0)?, lost(Cause::One, 1)?],
            [lost(Cause::Two, 0)?, lost(Cause::Two, 1)?],
        ],
        t,
    })
}

/// `τ_j(x)` as covariate `l` (0-based) sweeps `[-1, 1]` with the others held at `x`.
pub fn cate_profile(
    cause: u8,
    l: usize,
    x: &[f64],
    tstar: f64,
    points: usize,
) -> Result<Profile, String> {
    let cfg = SimConfig::default();
    check_x(&cfg, x)?;
    let cause = Cause::try_from(cause).map_err(|e| e.to_string())?;
    if l >= cfg.dim {
        return Err(format!("covariate index {l} out of range"));
    }
    let g = grid(-1.0, 1.0, points);
    let mut point = x.to_vec();
    let tau = g
        .iter()
        .map(|&v| {
            point[l] = v;
            true_cate(&cfg, cause, &point, tstar).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Profile { l, grid: g, tau })
}

/// Draws `n` rows, estimates the cause-1 ATE with `k` folds and compares to the oracle.
pub fn simulate_ate(
    n: usize,
    k: usize,
    seed: u64,
    tstar: f64,
    oracle_draws: usize,
) -> Result<AteDemo, String> {
    let sim = SimConfig::default();
    let data = sample_dgp(&sim, n, seed).map_err(|e| e.to_string())?;
    let cfg = CrossFitConfig {
        k,
        seed,
        tstar,
        learners: sim.correct_learners(Default::default()),
        ..CrossFitConfig::default()
    };
    let report = estimate_ate(&data, &cfg).map_err(|e| e.to_string())?;
    let truth =
        true_values_oracle(&sim, tstar, oracle_draws.max(2), seed).map_err(|e| e.to_string())?;
    Ok(AteDemo {
        n,
        k,
        seed,
        events: [
            data.count_events(0),
            data.count_events(1),
            data.count_events(2),
        ],
        point: report.point,
        se: report.se,
        ci_lower: report.ci_lower,
        ci_upper: report.ci_upper,
        truth: truth.psi[0],
        truth_se: truth.psi_se[0],
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = trueCurves)]
pub fn true_curves_js(x: Vec<f64>, horizon: f64, points: usize) -> Result<String, JsValue> {
    to_js(true_curves(&x, horizon, points))
}

#[wasm_bindgen(js_name = cateProfile)]
pub fn cate_profile_js(
    cause: u8,
    l: usize,
    x: Vec<f64>,
    tstar: f64,
    points: usize,
) -> Result<String, JsValue> {
    to_js(cate_profile(cause, l, &x, tstar, points))
}

#[wasm_bindgen(js_name = simulateAte)]
pub fn simulate_ate_js(
    n: usize,
    k: usize,
    seed: u64,
    tstar: f64,
    oracle_draws: usize,
) -> Result<String, JsValue> {
    to_js(simulate_ate(n, k, seed, tstar, oracle_draws))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_start_at_zero_and_grow() {
        let c = true_curves(&[0.2, -0.4, 0.1, 0.0], 30.0, 31).unwrap();
        assert_eq!(c.t.len(), 31);
        for a in 0..2 {
            assert_eq!(c.survival[a][0], 1.0);
            assert!(c.survival[a].windows(2).all(|w| w[1] <= w[0]));
            for j in 0..2 {
                assert_eq!(c.years_lost[j][a][0], 0.0);
                assert!(c.years_lost[j][a].windows(2).all(|w| w[1] >= w[0]));
            }
        }
        let closed = years_lost_closed_form(
            &SimConfig::default(),
            Cause::One,
            1,
            &[0.2, -0.4, 0.1, 0.0],
            30.0,
        );
        assert!((c.years_lost[0][1][30] - closed.unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn profile_is_flat_in_a_covariate_without_interaction() {
        let p = cate_profile(2, 3, &[0.0; 4], 30.0, 9).unwrap();
        assert!(p.tau.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-9));
        let q = cate_profile(1, 0, &[0.0; 4], 30.0, 9).unwrap();
        assert!(q.tau.first().unwrap() != q.tau.last().unwrap());
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(true_curves(&[0.0; 3], 30.0, 10).is_err());
        assert!(cate_profile(3, 0, &[0.0; 4], 30.0, 5).is_err());
        assert!(cate_profile(1, 4, &[0.0; 4], 30.0, 5).is_err());
        assert!(simulate_ate(300, 0, 1, 30.0, 10).is_err());
    }

    #[test]
    fn simulated_ate_near_truth() {
        let r = simulate_ate(600, 2, 4, 30.0, 400).unwrap();
        assert!(r.se > 0.0 && r.ci_lower < r.point && r.point < r.ci_upper);
        assert!((r.point - r.truth).abs() <= 5.0 * r.se, "{r:?}");
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"truth\""));
    }
}
