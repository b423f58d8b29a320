use crate::survdata::{HazardTarget, StepFn, SurvivalDataset};

/// Weighted Nelson–Aalen estimator from `(time, event code, weight)` triples.
///
/// For the censoring hazard, subjects failing from either cause at `s` are
/// removed from the censoring risk set at `s` (events precede censoring at ties).
pub fn nelson_aalen_weighted(obs: &[(f64, u8, f64)], target: HazardTarget) -> StepFn {
    let mut sorted: Vec<(f64, u8, f64)> = obs.iter().copied().filter(|o| o.2 != 0.0).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let code = target.event_code();
    let mut at_risk: f64 = sorted.iter().map(|o| o.2).sum();
    let mut times = Vec::new();
    let mut jumps = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let (mut d, mut other, mut leaving) = (0.0, 0.0, 0.0);
        while i < sorted.len() && sorted[i].0 == t {
            let (_, e, w) = sorted[i];
            if e == code {
                d += w;
            } else if e != 0 {
                other += w;
            }
            leaving += w;
            i += 1;
        }
        let denom = if target == HazardTarget::Censoring {
            at_risk - other
        } else {
            at_risk
        };
        if d > 0.0 && denom > 0.0 {
            times.push(t);
            jumps.push((d / denom).min(1.0));
        }
        at_risk -= leaving;
    }
    StepFn::from_sorted(0.0, times, jumps)
}

/// Marginal Nelson–Aalen cumulative hazard of `target`.
pub fn nelson_aalen(data: &SurvivalDataset, target: HazardTarget) -> StepFn {
    let obs: Vec<_> = data.rows().iter().map(|r| (r.time, r.event, 1.0)).collect();
    nelson_aalen_weighted(&obs, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed() {
        let obs = [(1.0, 1, 1.0), (2.0, 0, 1.0), (2.0, 2, 1.0), (3.0, 1, 1.0)];
        let l1 = nelson_aalen_weighted(&obs, HazardTarget::Cause1);
        assert_eq!(l1.times(), &[1.0, 3.0]);
        assert!((l1.jumps()[0] - 0.25).abs() < 1e-15);
        assert!((l1.jumps()[1] - 1.0).abs() < 1e-15);
        // Censoring at t=2: at risk 3, one cause-2 failure leaves first.
        let lc = nelson_aalen_weighted(&obs, HazardTarget::Censoring);
        assert_eq!(lc.times(), &[2.0]);
        assert!((lc.jumps()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weights_scale_invariant() {
        let obs = [(1.0, 1, 1.0), (2.0, 1, 3.0), (4.0, 0, 2.0)];
        let scaled: Vec<_> = obs.iter().map(|&(t, e, w)| (t, e, 10.0 * w)).collect();
        let a = nelson_aalen_weighted(&obs, HazardTarget::Cause1);
        let b = nelson_aalen_weighted(&scaled, HazardTarget::Cause1);
        for (x, y) in a.jumps().iter().zip(b.jumps()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
