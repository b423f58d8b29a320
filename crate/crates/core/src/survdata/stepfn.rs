use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous step function on `[0, inf)`.
///
/// Stores strictly increasing jump times, the jump sizes and the running
/// cumulative value after each jump, so evaluation is a binary search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StepFnRepr", into = "StepFnRepr")]
pub struct StepFn {
    baseline: f64,
    times: Vec<f64>,
    jumps: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepFnRepr {
    baseline: f64,
    times: Vec<f64>,
    jumps: Vec<f64>,
}

impl From<StepFnRepr> for StepFn {
    fn from(r: StepFnRepr) -> Self {
        StepFn::new(r.baseline, r.times, r.jumps)
    }
}

impl From<StepFn> for StepFnRepr {
    fn from(f: StepFn) -> Self {
        StepFnRepr {
            baseline: f.baseline,
            times: f.times,
            jumps: f.jumps,
        }
    }
}

impl StepFn {
    /// Builds a step function from (possibly unsorted, possibly tied) jumps.
    /// Jumps sharing a time are summed.
    pub fn new(baseline: f64, times: Vec<f64>, jumps: Vec<f64>) -> Self {
        assert_eq!(
            times.len(),
            jumps.len(),
            "jump times and sizes differ in length"
        );
        let sorted = times.windows(2).all(|w| w[0] < w[1]);
        let (times, jumps) = if sorted {
            (times, jumps)
        } else {
            let mut pairs: Vec<(f64, f64)> = times.into_iter().zip(jumps).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut t_out: Vec<f64> = Vec::with_capacity(pairs.len());
            let mut j_out: Vec<f64> = Vec::with_capacity(pairs.len());
            for (t, j) in pairs {
                match t_out.last() {
                    Some(&last) if last == t => *j_out.last_mut().unwrap() += j,
                    _ => {
                        t_out.push(t);
                        j_out.push(j);
                    }
                }
            }
            (t_out, j_out)
        };
        Self::from_sorted(baseline, times, jumps)
    }

    /// Caller guarantees strictly increasing `times`.
    pub(crate) fn from_sorted(baseline: f64, times: Vec<f64>, jumps: Vec<f64>) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        let mut acc = baseline;
        let values = jumps
            .iter()
            .map(|j| {
                acc += j;
                acc
            })
            .collect();
        Self {
            baseline,
            times,
            jumps,
            values,
        }
    }

    pub fn zero() -> Self {
        Self::from_sorted(0.0, Vec::new(), Vec::new())
    }

    pub fn constant(c: f64) -> Self {
        Self::from_sorted(c, Vec::new(), Vec::new())
    }

    /// A cumulative hazard: baseline 0, nonnegative finite jumps at nonnegative times.
    pub fn cumulative_hazard(times: Vec<f64>, jumps: Vec<f64>) -> Result<Self> {
        if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::InvalidData(format!("invalid jump time {t}")));
        }
        if let Some(j) = jumps.iter().find(|j| !(j.is_finite() && **j >= 0.0)) {
            return Err(Error::InvalidData(format!(
                "negative or non-finite hazard jump {j}"
            )));
        }
        Ok(Self::new(0.0, times, jumps))
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    /// Value right after each jump.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of jumps at times `<= t`.
    pub fn count_le(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// Number of jumps at times `< t`.
    pub fn count_lt(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    /// `f(t)`, right-continuous.
    pub fn eval(&self, t: f64) -> f64 {
        match self.count_le(t) {
            0 => self.baseline,
            k => self.values[k - 1],
        }
    }

    /// `f(t-)`, excluding a jump exactly at `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.count_lt(t) {
            0 => self.baseline,
            k => self.values[k - 1],
        }
    }

    pub fn jump_at(&self, t: f64) -> f64 {
        let k = self.count_lt(t);
        match self.times.get(k) {
            Some(&s) if s == t => self.jumps[k],
            _ => 0.0,
        }
    }

    /// Multiplies baseline and every jump by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            baseline: self.baseline * c,
            times: self.times.clone(),
            jumps: self.jumps.iter().map(|j| j * c).collect(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Keeps only jumps at times `<= horizon`.
    pub fn truncated(&self, horizon: f64) -> Self {
        let k = self.count_le(horizon);
        Self {
            baseline: self.baseline,
            times: self.times[..k].to_vec(),
            jumps: self.jumps[..k].to_vec(),
            values: self.values[..k].to_vec(),
        }
    }

    pub fn is_cumulative_hazard(&self) -> bool {
        self.baseline == 0.0 && self.jumps.iter().all(|j| j.is_finite() && *j >= 0.0)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.jumps.iter().all(|j| *j >= 0.0)
    }

    /// Exact `∫_0^t f(u) du` for `t >= 0`.
    pub fn integral(&self, t: f64) -> f64 {
        let mut area = 0.0;
        let mut level = self.baseline;
        let mut prev = 0.0;
        for (&s, &v) in self.times.iter().zip(&self.values) {
            if s >= t {
                break;
            }
            let s = s.max(0.0);
            area += level * (s - prev);
            prev = s;
            level = v;
        }
        area + level * (t - prev).max(0.0)
    }

    /// `sup_{0 <= s <= t} |f(s) - g(s)|` for `g` evaluated at `f`'s jumps and a
    /// caller-supplied grid; exact when `g` is a step function with jumps in `grid`.
    pub fn sup_distance_on(&self, g: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
        let mut best: f64 = 0.0;
        for &s in self.times.iter().chain(grid) {
            best = best.max((self.eval(s) - g(s)).abs());
            best = best.max((self.eval_left(s) - g(s)).abs());
        }
        best
    }
}

/// `Σ_{s in jumps(f), lower < s <= upper} g(s) Δf(s)`; exact Stieltjes sum.
pub fn stieltjes_integrate_between(
    g: impl Fn(f64) -> f64,
    f: &StepFn,
    lower: f64,
    upper: f64,
) -> f64 {
    if upper <= lower {
        return 0.0;
    }
    let start = f.count_le(lower);
    let end = f.count_le(upper);
    f.times[start..end]
        .iter()
        .zip(&f.jumps[start..end])
        .map(|(&s, &d)| g(s) * d)
        .sum()
}

/// `∫_(0, t] g dΛ` for a step function `Λ`.
pub fn stieltjes_integrate(g: impl Fn(f64) -> f64, f: &StepFn, t: f64) -> f64 {
    stieltjes_integrate_between(g, f, 0.0, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ties_are_merged() {
        let f = StepFn::new(0.0, vec![2.0, 1.0, 2.0], vec![0.1, 0.2, 0.3]);
        assert_eq!(f.times(), &[1.0, 2.0]);
        assert!((f.jumps()[1] - 0.4).abs() < 1e-15);
        assert!((f.eval(2.0) - 0.6).abs() < 1e-15);
        assert!((f.eval_left(2.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn stieltjes_examples() {
        let single = StepFn::new(0.0, vec![1.0], vec![0.5]);
        assert_eq!(stieltjes_integrate(|_| 2.0, &single, 2.0), 1.0);
        assert_eq!(stieltjes_integrate(|s| s, &single, 0.5), 0.0);
        let three = StepFn::new(0.0, vec![1.0, 2.0, 3.0], vec![0.1; 3]);
        assert!((stieltjes_integrate(|s| s, &three, 2.5) - 0.3).abs() < 1e-15);
        assert_eq!(stieltjes_integrate(|s| s, &StepFn::zero(), 10.0), 0.0);
    }

    #[test]
    fn integral_of_step() {
        let f = StepFn::new(0.0, vec![1.0], vec![0.2]);
        assert!((f.integral(3.0) - 0.4).abs() < 1e-15);
        assert_eq!(f.integral(0.5), 0.0);
        assert!((StepFn::constant(2.0).integral(1.5) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn cumulative_hazard_rejects_negative_jumps() {
        assert!(StepFn::cumulative_hazard(vec![1.0], vec![-0.1]).is_err());
        assert!(StepFn::cumulative_hazard(vec![-1.0], vec![0.1]).is_err());
    }

    fn arb_step() -> impl Strategy<Value = StepFn> {
        prop::collection::vec((0.0f64..10.0, -1.0f64..1.0), 0..20).prop_map(|v| {
            let (t, j): (Vec<_>, Vec<_>) = v.into_iter().unzip();
            StepFn::new(0.3, t, j)
        })
    }

    proptest! {
        #[test]
        fn left_limit_plus_jump_is_value(f in arb_step(), t in 0.0f64..11.0, pick in any::<prop::sample::Index>()) {
            let t = if f.is_empty() { t } else { f.times()[pick.index(f.len())] };
            prop_assert!((f.eval_left(t) + f.jump_at(t) - f.eval(t)).abs() < 1e-12);
        }

        #[test]
        fn non_jump_points_are_continuous(f in arb_step(), t in 0.0f64..11.0) {
            if f.jump_at(t) == 0.0 {
                prop_assert_eq!(f.eval_left(t), f.eval(t));
            }
        }

        #[test]
        fn stieltjes_linear_and_additive(
            f in arb_step(), c in -3.0f64..3.0, mid in 0.0f64..10.0, hi in 0.0f64..10.0,
        ) {
            let g1 = |s: f64| s.sin();
            let g2 = |s: f64| s * s;
            let lhs = stieltjes_integrate(|s| c * g1(s) + g2(s), &f, hi);
            let rhs = c * stieltjes_integrate(g1, &f, hi) + stieltjes_integrate(g2, &f, hi);
            prop_assert!((lhs - rhs).abs() < 1e-9);
            let (lo, hi) = if mid < hi { (mid, hi) } else { (hi, mid) };
            let whole = stieltjes_integrate(g1, &f, hi);
            let split = stieltjes_integrate(g1, &f, lo) + stieltjes_integrate_between(g1, &f, lo, hi);
            prop_assert!((whole - split).abs() < 1e-12);
        }
    }
}
