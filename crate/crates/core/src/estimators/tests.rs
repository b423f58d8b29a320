use std::sync::Arc;

use super::*;
use crate::eif::uncentered_eif_ate;
use crate::learners::{
    ColumnSelector, ConstantPropensity, CumulativeHazardModel, FeatureMap, FixedHazard,
};
use crate::simlab::{sample_dgp, true_nuisance, SimConfig};
use crate::survdata::{HazardTarget, ObservationRecord, StepFn};

fn dgp(n: usize, seed: u64) -> SurvivalDataset {
    sample_dgp(&SimConfig::default(), n, seed).unwrap()
}

fn cor(k: usize) -> CrossFitConfig {
    CrossFitConfig {
        k,
        seed: 42,
        learners: SimConfig::default().correct_learners(LearnerConfig::default()),
        ..CrossFitConfig::default()
    }
}

#[test]
fn null_effect_is_not_detected() {
    let mut sim = SimConfig::default();
    for h in [&mut sim.cause1, &mut sim.cause2] {
        h.treatment = 0.0;
        h.interaction = vec![0.0; 4];
    }
    let data = sample_dgp(&sim, 2000, 3).unwrap();
    let cfg = CrossFitConfig {
        k: 5,
        ..CrossFitConfig::default()
    };
    let r = estimate_ate(&data, &cfg).unwrap();
    assert!(r.point.abs() <= 3.0 * r.se, "{} vs se {}", r.point, r.se);
}

#[test]
fn point_is_fold_weighted_mean() {
    let data = dgp(400, 1);
    let fit = cross_fit(&data, &cor(4)).unwrap();
    let r = fit.ate_report(&data);
    let phi = fit.phi();
    let mut expected = 0.0;
    for k in 0..4 {
        let idx = fit.plan.fold(k);
        let m = idx.iter().map(|&i| phi[i]).sum::<f64>() / idx.len() as f64;
        expected += idx.len() as f64 / 400.0 * m;
    }
    assert!((r.point - expected).abs() <= 1e-12);
    let mean_if = r.if_values.iter().sum::<f64>() / 400.0;
    assert!(mean_if.abs() <= 1e-12);
    let var = r.if_values.iter().map(|v| v * v).sum::<f64>() / 400.0;
    assert!((r.se - (var / 400.0).sqrt()).abs() <= 1e-15);
    assert_eq!(r.fold_diagnostics.len(), 4);
}

#[test]
fn single_fold_is_plain_one_step() {
    let data = dgp(300, 2);
    let cfg = cor(1);
    let r = estimate_ate(&data, &cfg).unwrap();
    let nu = fit_nuisance_bundle(&data, &cfg.learner_config(), cfg.nuisance_seed(0)).unwrap();
    let ctx = EifContext::new(nu, cfg.cause, cfg.tstar).unwrap();
    let one_step = data
        .rows()
        .iter()
        .map(|o| uncentered_eif_ate(o, &ctx).unwrap())
        .sum::<f64>()
        / 300.0;
    assert_eq!(r.point, one_step);
}

#[test]
fn same_seed_same_reports() {
    let data = dgp(300, 4);
    let cfg = cor(3);
    let a = rank_covariates(&data, &cfg).unwrap();
    let b = rank_covariates(&data, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(
        estimate_ate(&data, &cfg).unwrap(),
        estimate_ate(&data, &cfg).unwrap()
    );
}

#[test]
fn vim_identities() {
    let data = dgp(400, 5);
    let fit = cross_fit(&data, &cor(3)).unwrap();
    for l in 0..4 {
        let v = fit.vim_report(&data, l).unwrap();
        assert!((v.omega * v.chi - v.gamma).abs() <= 1e-12);
        assert_eq!(v.omega, v.report.point);
        let p = v.p_value();
        assert!((0.0..=1.0).contains(&p));
        assert!((p - crate::survdata::two_sided_p_value(v.tst())).abs() <= 1e-15);
        let mean = v.report.if_values.iter().sum::<f64>() / 400.0;
        assert!(mean.abs() <= 1e-10, "mean contribution {mean}");
    }
}

#[test]
fn single_fold_contributions_average_to_zero() {
    let data = dgp(300, 6);
    let fit = cross_fit(&data, &cor(1)).unwrap();
    let v = fit.vim_report(&data, 1).unwrap();
    assert!((v.report.if_values.iter().sum::<f64>() / 300.0).abs() <= 1e-10);
}

#[test]
fn rescaling_a_covariate_halves_omega() {
    let data = dgp(500, 7);
    let scaled = data.map_covariate(0, |v| 2.0 * v);
    let cfg = cor(2);
    for l in [0, 1] {
        let a = estimate_vim(&data, &cfg, l).unwrap();
        let b = estimate_vim(&scaled, &cfg, l).unwrap();
        let factor = if l == 0 { 0.5 } else { 1.0 };
        assert!(
            (b.omega - factor * a.omega).abs() <= 1e-6 * a.omega.abs().max(1.0),
            "{} vs {}",
            b.omega,
            a.omega
        );
        assert!(
            (b.tst() - a.tst()).abs() <= 1e-6,
            "{} vs {}",
            b.tst(),
            a.tst()
        );
    }
}

fn with_constant_column(n: usize) -> SurvivalDataset {
    let base = dgp(n, 8);
    let rows = base
        .rows()
        .iter()
        .map(|r| ObservationRecord {
            covariates: vec![r.covariates[0], 0.5],
            ..r.clone()
        })
        .collect();
    SurvivalDataset::new(rows, vec!["X1".into(), "C".into()]).unwrap()
}

fn first_column_only() -> CrossFitConfig {
    let mut cfg = cor(2);
    let map = FeatureMap::new(vec![0], true, vec![0]);
    cfg.learners.cox.cause1 = map.clone();
    cfg.learners.cox.cause2 = map;
    cfg.learners.cox.censoring = FeatureMap::new(vec![0], false, vec![]);
    cfg.learners.propensity_features = ColumnSelector::Indices(vec![0]);
    cfg
}

#[test]
fn constant_column_is_degenerate() {
    let data = with_constant_column(300);
    let cfg = first_column_only();
    assert!(matches!(
        estimate_vim(&data, &cfg, 1),
        Err(Error::DegenerateDenominator(_))
    ));
    let ranked = rank_covariates(&data, &cfg).unwrap();
    assert_eq!(ranked.len(), 2);
    assert!(!ranked[0].degenerate);
    assert!(ranked[1].degenerate && ranked[1].l == 1);
}

#[test]
fn ranking_order() {
    let mut reports: Vec<VimReport> = Vec::new();
    let data = with_constant_column(20);
    let cfg = cor(1);
    for (l, (p, z)) in [(0.2, 1.0), (0.01, 2.5), (0.01, -3.0)].iter().enumerate() {
        let mut v = VimReport::failed(&data, &cfg, l.min(1), &Error::Singular);
        v.degenerate = false;
        v.l = l;
        v.report.p_value = Some(*p);
        v.report.test_stat = Some(*z);
        reports.push(v);
    }
    reports.push(VimReport::failed(&data, &cfg, 1, &Error::Singular));
    sort_reports(&mut reports);
    let order: Vec<(usize, bool)> = reports.iter().map(|r| (r.l, r.degenerate)).collect();
    assert_eq!(order, vec![(2, false), (1, false), (0, false), (1, true)]);
}

#[test]
fn oracle_nuisances_make_folds_irrelevant() {
    let data = dgp(500, 9);
    let nu = true_nuisance(&SimConfig::default(), 30.0, 2000, 0.01);
    let cfg = cor(1);
    let one = with_nuisances(
        &data,
        &cfg,
        FoldPlan::from_assignment(vec![0; 500], 1).unwrap(),
        vec![nu.clone()],
    )
    .unwrap()
    .ate_report(&data);
    for (k, seed) in [(2, 1), (5, 2), (10, 3)] {
        let plan = make_folds(500, k, seed).unwrap();
        let r = with_nuisances(&data, &cfg, plan, vec![nu.clone(); k])
            .unwrap()
            .ate_report(&data);
        assert!((r.point - one.point).abs() <= 1e-12);
        assert!((r.se - one.se).abs() <= 1e-12);
    }
}

#[test]
fn fold_too_small() {
    let data = dgp(40, 10);
    let cfg = CrossFitConfig {
        min_fold_events: 1000,
        ..cor(1)
    };
    assert!(matches!(
        estimate_ate(&data, &cfg),
        Err(Error::FoldTooSmall { .. })
    ));
}

#[test]
fn invalid_config() {
    let data = dgp(50, 11);
    for cfg in [
        CrossFitConfig { k: 0, ..cor(1) },
        CrossFitConfig {
            tstar: 0.0,
            ..cor(1)
        },
        CrossFitConfig { eta: 0.5, ..cor(1) },
    ] {
        assert!(matches!(
            estimate_ate(&data, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
    assert!(matches!(
        estimate_vim(&data, &cor(1), 4),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn projection_of_constant_cate() {
    let data = dgp(400, 12);
    let mut cfg = cor(2);
    for map in [&mut cfg.learners.cox.cause1, &mut cfg.learners.cox.cause2] {
        *map = FeatureMap::new(vec![0, 1, 2], false, vec![]);
    }
    let p = fit_cate_projection(&data, &cfg, 0, 1).unwrap();
    for x in [[0.1, 0.2, -0.3], [0.9, -0.9, 0.0]] {
        assert!(p.tau.predict(&x).abs() <= 1e-12);
    }
}

#[test]
fn projection_mean_of_independent_covariate() {
    let data = dgp(2000, 13);
    let p = fit_cate_projection(&data, &cor(2), 0, 0).unwrap();
    let mut rng = crate::rng::rng_from(99);
    use rand::Rng;
    let preds: Vec<f64> = (0..2000)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            p.mean.predict(&x)
        })
        .collect();
    let mse = preds.iter().map(|v| v * v).sum::<f64>() / 2000.0;
    assert!(mse <= 0.05, "mse {mse}");
    let mean = preds.iter().sum::<f64>() / 2000.0;
    let sd = (1.0f64 / 3.0).sqrt();
    assert!(mean.abs() <= 4.0 * sd / (2000f64).sqrt(), "mean {mean}");
}

#[test]
fn projection_uses_training_split_only() {
    let data = dgp(300, 14);
    let cfg = cor(3);
    let fit = cross_fit(&data, &cfg).unwrap();
    let a = fit.projection(&data, 2, 1).unwrap();
    // Perturb the evaluation fold's outcomes: the fold-1 projection is unchanged.
    let eval = fit.plan.fold(1);
    let rows = data
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if eval.contains(&i) {
                ObservationRecord {
                    time: r.time * 0.5,
                    ..r.clone()
                }
            } else {
                r.clone()
            }
        })
        .collect();
    let moved = SurvivalDataset::new(rows, data.covariate_names().to_vec()).unwrap();
    let b = fit_cate_projection(&moved, &cfg, 2, 1).unwrap();
    for x in [[0.1, 0.2, -0.3], [0.9, -0.9, 0.0]] {
        assert_eq!(a.tau.predict(&x), b.tau.predict(&x));
        assert_eq!(a.mean.predict(&x), b.mean.predict(&x));
    }
}

fn fixed_bundle(censoring: StepFn) -> NuisanceFit {
    let z = |t| Arc::new(FixedHazard::zero(t)) as Arc<dyn CumulativeHazardModel>;
    NuisanceFit::new(
        Arc::new(FixedHazard {
            target: HazardTarget::Cause1,
            cumhaz: StepFn::new(0.0, vec![5.0], vec![0.1]),
        }),
        z(HazardTarget::Cause2),
        Arc::new(FixedHazard {
            target: HazardTarget::Censoring,
            cumhaz: censoring,
        }),
        Arc::new(ConstantPropensity(0.5)),
        0.01,
    )
}

#[test]
fn positivity_flags() {
    let data = dgp(50, 15);
    let light = positivity_check(
        &fixed_bundle(StepFn::new(0.0, vec![10.0], vec![0.1])),
        &data,
        30.0,
        0.01,
    )
    .unwrap();
    assert!(light.flags.is_empty());
    assert_eq!(light.min_propensity, 0.5);
    assert!((light.min_censoring_survival - 0.9).abs() < 1e-15);
    let heavy = positivity_check(
        &fixed_bundle(StepFn::new(0.0, vec![10.0, 20.0], vec![0.9, 0.995])),
        &data,
        30.0,
        0.01,
    )
    .unwrap();
    assert!(heavy.censoring_clips > 0);
    assert_eq!(heavy.flags.len(), 1);
}

#[test]
fn simulation_design_has_no_clips() {
    let data = dgp(1000, 16);
    let cfg = cor(1);
    let nu = fit_nuisance_bundle(&data, &cfg.learner_config(), 0).unwrap();
    let s = positivity_check(&nu, &data, 30.0, 0.01).unwrap();
    assert_eq!(s.propensity_clips + s.censoring_clips, 0, "{s:?}");
}
