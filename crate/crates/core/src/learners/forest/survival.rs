//! Random survival forest with log-rank splits and in-leaf Nelson–Aalen hazards.

use super::{resample, Grower, Tree};
use crate::error::{Error, Result};
use crate::learners::config::ForestParams;
use crate::learners::CumulativeHazardModel;
use crate::rng::{derive_seed, rng_from};
use crate::survdata::{HazardTarget, StepFn, SurvivalDataset};

#[derive(Debug, Clone)]
struct SurvTree {
    tree: Tree,
    /// Leaf `k` owns `jumps[offsets[k]..offsets[k + 1]]`, as (grid index, increment).
    offsets: Vec<usize>,
    jumps: Vec<(u32, f64)>,
}

impl SurvTree {
    fn leaf_jumps(&self, x: &[f64]) -> &[(u32, f64)] {
        let k = self.tree.leaf(x);
        &self.jumps[self.offsets[k]..self.offsets[k + 1]]
    }
}

/// Ensemble of survival trees for one cause-specific (or censoring) hazard.
///
/// Features are the covariates followed by the treatment indicator.
#[derive(Debug, Clone)]
pub struct SurvivalForestFit {
    pub target: HazardTarget,
    pub params: ForestParams,
    pub mtry: usize,
    pub seed: u64,
    /// Harrell's concordance of out-of-bag ensemble mortality, when requested.
    pub oob_concordance: Option<f64>,
    grid: Vec<f64>,
    trees: Vec<SurvTree>,
}

impl SurvivalForestFit {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Ensemble cumulative hazard at a full feature vector `(x, a)`.
    pub fn predict_features(&self, z: &[f64]) -> StepFn {
        let mut acc = vec![0.0; self.grid.len()];
        for t in &self.trees {
            for &(g, d) in t.leaf_jumps(z) {
                acc[g as usize] += d;
            }
        }
        let scale = 1.0 / self.trees.len() as f64;
        let (times, jumps): (Vec<f64>, Vec<f64>) = acc
            .iter()
            .zip(&self.grid)
            .filter(|(d, _)| **d > 0.0)
            .map(|(d, &t)| (t, d * scale))
            .unzip();
        StepFn::from_sorted(0.0, times, jumps)
    }
}

impl CumulativeHazardModel for SurvivalForestFit {
    fn cumulative_hazard(&self, a: u8, x: &[f64]) -> StepFn {
        let mut z = Vec::with_capacity(x.len() + 1);
        z.extend_from_slice(x);
        z.push(f64::from(a));
        self.predict_features(&z)
    }

    fn describe(&self) -> String {
        format!(
            "survival-forest[{:?}, {} trees]",
            self.target,
            self.trees.len()
        )
    }
}

/// Training rows in canonical order: by time, then event code, then features.
struct Prepared {
    x: Vec<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
    other: Vec<bool>,
    grid_index: Vec<u32>,
    grid: Vec<f64>,
}

fn prepare(data: &SurvivalDataset, target: HazardTarget) -> Prepared {
    let feat = |i: usize| {
        let r = data.row(i);
        let mut z = r.covariates.clone();
        z.push(f64::from(r.treatment));
        z
    };
    let mut order: Vec<usize> = (0..data.n()).collect();
    let keyed: Vec<(f64, u8, Vec<f64>)> = (0..data.n())
        .map(|i| (data.row(i).time, data.row(i).event, feat(i)))
        .collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (&keyed[a], &keyed[b]);
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then_with(|| {
            ka.2.iter()
                .zip(&kb.2)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let code = target.event_code();
    let mut grid: Vec<f64> = order
        .iter()
        .filter(|&&i| keyed[i].1 == code)
        .map(|&i| keyed[i].0)
        .collect();
    grid.dedup();
    let time: Vec<f64> = order.iter().map(|&i| keyed[i].0).collect();
    Prepared {
        x: order
            .iter()
            .flat_map(|&i| keyed[i].2.iter().copied())
            .collect(),
        grid_index: time
            .iter()
            .map(|t| grid.partition_point(|g| g < t) as u32)
            .collect(),
        event: order.iter().map(|&i| keyed[i].1 == code).collect(),
        other: order
            .iter()
            .map(|&i| keyed[i].1 != code && keyed[i].1 != 0)
            .collect(),
        time,
        grid,
    }
}

/// Squared standardized log-rank statistic for the split given by `left`.
fn log_rank(prep: &Prepared, rows: &[usize], left: &[bool]) -> Option<f64> {
    let (mut y, mut yl) = (0.0f64, 0.0f64);
    let (mut num, mut var) = (0.0, 0.0);
    let mut k = rows.len();
    while k > 0 {
        let t = prep.time[rows[k - 1]];
        let (mut d, mut dl) = (0.0, 0.0);
        while k > 0 && prep.time[rows[k - 1]] == t {
            k -= 1;
            let l = left[k];
            y += 1.0;
            if l {
                yl += 1.0;
            }
            if prep.event[rows[k]] {
                d += 1.0;
                if l {
                    dl += 1.0;
                }
            }
        }
        if d > 0.0 && y > 1.0 {
            let frac = yl / y;
            num += dl - d * frac;
            var += d * frac * (1.0 - frac) * (y - d) / (y - 1.0);
        }
    }
    (var > 1e-12).then(|| num * num / var)
}

/// Nelson–Aalen increments over a leaf's rows (time-sorted, with bootstrap multiplicity).
fn leaf_hazard(prep: &Prepared, rows: &[usize], censoring: bool, out: &mut Vec<(u32, f64)>) {
    let mut at_risk = rows.len() as f64;
    let mut k = 0;
    while k < rows.len() {
        let t = prep.time[rows[k]];
        let (mut d, mut other, mut leaving) = (0.0, 0.0, 0.0);
        let g = prep.grid_index[rows[k]];
        while k < rows.len() && prep.time[rows[k]] == t {
            if prep.event[rows[k]] {
                d += 1.0;
            } else if prep.other[rows[k]] {
                other += 1.0;
            }
            leaving += 1.0;
            k += 1;
        }
        let denom = if censoring { at_risk - other } else { at_risk };
        if d > 0.0 {
            out.push((g, (d / denom).min(1.0)));
        }
        at_risk -= leaving;
    }
}

/// Harrell's C: a pair is concordant when the earlier observed event has higher mortality.
fn concordance(time: &[f64], event: &[bool], risk: &[Option<f64>]) -> Option<f64> {
    let (mut conc, mut total) = (0.0, 0.0);
    for i in 0..time.len() {
        let (true, Some(ri)) = (event[i], risk[i]) else {
            continue;
        };
        for j in 0..time.len() {
            if time[j] <= time[i] {
                continue;
            }
            if let Some(rj) = risk[j] {
                total += 1.0;
                conc += if ri > rj {
                    1.0
                } else if ri == rj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (total > 0.0).then(|| conc / total)
}

pub fn fit_survival_forest(
    data: &SurvivalDataset,
    target: HazardTarget,
    params: &ForestParams,
    seed: u64,
) -> Result<SurvivalForestFit> {
    let n = data.n();
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::InfeasibleParams(
            "n_trees and min_leaf must be positive".into(),
        ));
    }
    if n < 2 * params.min_leaf {
        return Err(Error::InfeasibleParams(format!(
            "{n} rows cannot fill two leaves of min_leaf = {}",
            params.min_leaf
        )));
    }
    let p = data.dim() + 1;
    let mtry = params
        .mtry
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p);
    let prep = prepare(data, target);
    let censoring = target == HazardTarget::Censoring;
    let grower = Grower {
        x: &prep.x,
        p,
        min_leaf: params.min_leaf,
        mtry,
        nsplit: params.nsplit,
    };

    let grown: Vec<(SurvTree, Vec<bool>, Vec<f64>)> = crate::par_map(params.n_trees, |b| {
        let mut rng = rng_from(derive_seed(seed, &[b as u64]));
        let (rows, in_bag) = resample(n, params.bootstrap, &mut rng);
        let mut offsets = vec![0];
        let mut jumps = Vec::new();
        let mut mortality = Vec::new();
        let tree = grower.grow(
            rows,
            &mut rng,
            |rows, left| log_rank(&prep, rows, left),
            |rows| rows.iter().any(|&r| prep.event[r]),
            |rows| {
                let start = jumps.len();
                leaf_hazard(&prep, rows, censoring, &mut jumps);
                offsets.push(jumps.len());
                let g = prep.grid.len() as f64;
                mortality.push(
                    jumps[start..]
                        .iter()
                        .map(|&(k, d)| d * (g - k as f64))
                        .sum(),
                );
                (offsets.len() - 2) as u32
            },
        );
        (
            SurvTree {
                tree,
                offsets,
                jumps,
            },
            in_bag,
            mortality,
        )
    });

    let oob_concordance = if params.oob_concordance && params.bootstrap {
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (t, in_bag, mort) in &grown {
            for i in (0..n).filter(|&i| !in_bag[i]) {
                sum[i] += mort[t.tree.leaf(&prep.x[i * p..(i + 1) * p])];
                count[i] += 1;
            }
        }
        let risk: Vec<Option<f64>> = sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        concordance(&prep.time, &prep.event, &risk)
    } else {
        None
    };

    Ok(SurvivalForestFit {
        target,
        params: params.clone(),
        mtry,
        seed,
        oob_concordance,
        grid: prep.grid,
        trees: grown.into_iter().map(|(t, _, _)| t).collect(),
    })
}
