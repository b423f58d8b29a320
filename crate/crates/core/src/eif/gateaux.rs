//! Finite-difference Gateaux check of the ATE influence function on
//! discrete-covariate data with cell-wise empirical plug-in nuisances.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{eif_terms, EifContext};
use crate::error::{Error, Result};
use crate::learners::nelson_aalen::nelson_aalen_weighted;
use crate::learners::{CumulativeHazardModel, NuisanceFit, PropensityModel};
use crate::lifeyears::years_lost;
use crate::survdata::{Cause, HazardTarget, StepFn, SurvivalDataset};

const MIN_CELL: usize = 5;

/// Floor far below any empirical probability in a valid dataset, so clipping never binds.
const PLUG_IN_ETA: f64 = 1e-12;

type CellKey = Vec<u64>;

fn key(x: &[f64]) -> CellKey {
    x.iter().map(|v| v.to_bits()).collect()
}

#[derive(Debug, Clone)]
struct CellHazard {
    target: HazardTarget,
    table: BTreeMap<(u8, CellKey), StepFn>,
}

impl CumulativeHazardModel for CellHazard {
    fn cumulative_hazard(&self, a: u8, x: &[f64]) -> StepFn {
        self.table
            .get(&(a, key(x)))
            .cloned()
            .unwrap_or_else(StepFn::zero)
    }

    fn describe(&self) -> String {
        format!("cell-nelson-aalen[{:?}]", self.target)
    }
}

#[derive(Debug, Clone)]
struct CellPropensity(BTreeMap<CellKey, f64>);

impl PropensityModel for CellPropensity {
    fn prob_treated(&self, x: &[f64]) -> f64 {
        self.0.get(&key(x)).copied().unwrap_or(0.5)
    }

    fn describe(&self) -> String {
        "cell-empirical".into()
    }
}

/// Rows grouped by covariate value, then by arm.
fn cells(data: &SurvivalDataset) -> BTreeMap<CellKey, [Vec<usize>; 2]> {
    let mut out: BTreeMap<CellKey, [Vec<usize>; 2]> = BTreeMap::new();
    for (i, r) in data.rows().iter().enumerate() {
        out.entry(key(&r.covariates)).or_default()[r.treatment as usize].push(i);
    }
    out
}

fn check_cells(data: &SurvivalDataset) -> Result<BTreeMap<CellKey, [Vec<usize>; 2]>> {
    let cells = cells(data);
    for (k, arms) in &cells {
        for (a, rows) in arms.iter().enumerate() {
            if rows.len() < MIN_CELL {
                let x: Vec<String> = k.iter().map(|b| f64::from_bits(*b).to_string()).collect();
                return Err(Error::SparseCell {
                    a: a as u8,
                    x: x.join(","),
                    count: rows.len(),
                    min: MIN_CELL,
                });
            }
        }
    }
    Ok(cells)
}

/// Cell-wise weighted Nelson–Aalen hazards and empirical propensities.
pub fn plug_in_nuisance(data: &SurvivalDataset, weights: &[f64]) -> Result<NuisanceFit> {
    let cells = check_cells(data)?;
    let targets = [
        HazardTarget::Cause1,
        HazardTarget::Cause2,
        HazardTarget::Censoring,
    ];
    let mut tables: [BTreeMap<(u8, CellKey), StepFn>; 3] = Default::default();
    let mut prop = BTreeMap::new();
    for (k, arms) in &cells {
        let mut mass = [0.0; 2];
        for (a, rows) in arms.iter().enumerate() {
            let obs: Vec<(f64, u8, f64)> = rows
                .iter()
                .map(|&i| (data.row(i).time, data.row(i).event, weights[i]))
                .collect();
            mass[a] = obs.iter().map(|o| o.2).sum();
            for (t, table) in targets.iter().zip(tables.iter_mut()) {
                table.insert((a as u8, k.clone()), nelson_aalen_weighted(&obs, *t));
            }
        }
        prop.insert(k.clone(), mass[1] / (mass[0] + mass[1]));
    }
    let [t1, t2, tc] = tables;
    let model =
        |target, table| Arc::new(CellHazard { target, table }) as Arc<dyn CumulativeHazardModel>;
    Ok(NuisanceFit::new(
        model(HazardTarget::Cause1, t1),
        model(HazardTarget::Cause2, t2),
        model(HazardTarget::Censoring, tc),
        Arc::new(CellPropensity(prop)),
        PLUG_IN_ETA,
    ))
}

/// `ψ_j(P_w) = Σ_x P_w(X = x) τ_j(x)` for the weighted empirical measure `P_w`.
pub fn plug_in_functional(
    data: &SurvivalDataset,
    weights: &[f64],
    cause: Cause,
    tstar: f64,
) -> Result<f64> {
    let nu = plug_in_nuisance(data, weights)?;
    let total: f64 = weights.iter().sum();
    let mut psi = 0.0;
    for (k, arms) in cells(data) {
        let x: Vec<f64> = k.iter().map(|b| f64::from_bits(*b)).collect();
        let px: f64 = arms.iter().flatten().map(|&i| weights[i]).sum::<f64>() / total;
        let l1 = years_lost(&nu.cause_system(1, &x, tstar)?, cause, tstar).value;
        let l0 = years_lost(&nu.cause_system(0, &x, tstar)?, cause, tstar).value;
        psi += px * (l1 - l0);
    }
    Ok(psi)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GateauxCheck {
    /// `(ψ(P_ε) - ψ(P)) / ε` with `P_ε = (1 - ε) P + ε δ_O`.
    pub fd: f64,
    /// Centered influence function `φ_j(O) - ψ(P)` under the plug-in nuisances.
    pub eif: f64,
    pub gap: f64,
}

/// Directional finite difference towards the measure with atom weights `q`.
pub fn gateaux_fd_direction(
    data: &SurvivalDataset,
    q: &[f64],
    eps: f64,
    cause: Cause,
    tstar: f64,
) -> Result<f64> {
    let n = data.n() as f64;
    let base = vec![1.0 / n; data.n()];
    let moved: Vec<f64> = q.iter().map(|&qi| (1.0 - eps) / n + eps * qi).collect();
    let psi0 = plug_in_functional(data, &base, cause, tstar)?;
    Ok((plug_in_functional(data, &moved, cause, tstar)? - psi0) / eps)
}

/// Influence-function values `φ_j(O_i) - ψ(P_n)` for every row under the plug-in nuisances.
pub fn plug_in_eif(data: &SurvivalDataset, cause: Cause, tstar: f64) -> Result<Vec<f64>> {
    let base = vec![1.0 / data.n() as f64; data.n()];
    let psi = plug_in_functional(data, &base, cause, tstar)?;
    let ctx = EifContext::new(plug_in_nuisance(data, &base)?, cause, tstar)?;
    data.rows()
        .iter()
        .map(|o| Ok(eif_terms(o, &ctx)?.phi - psi))
        .collect()
}

pub fn gateaux_fd_check(
    data: &SurvivalDataset,
    index: usize,
    eps: f64,
    cause: Cause,
    tstar: f64,
) -> Result<GateauxCheck> {
    if index >= data.n() {
        return Err(Error::InvalidConfig(format!(
            "observation index {index} out of range"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in (0, 1), got {eps}"
        )));
    }
    let mut q = vec![0.0; data.n()];
    q[index] = 1.0;
    let fd = gateaux_fd_direction(data, &q, eps, cause, tstar)?;
    let base = vec![1.0 / data.n() as f64; data.n()];
    let psi = plug_in_functional(data, &base, cause, tstar)?;
    let ctx = EifContext::new(plug_in_nuisance(data, &base)?, cause, tstar)?;
    let eif = eif_terms(data.row(index), &ctx)?.phi - psi;
    Ok(GateauxCheck {
        fd,
        eif,
        gap: (fd - eif).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survdata::ObservationRecord;
    use rand::Rng;

    /// Binary covariates, integer times in 1..=6, both causes and censoring.
    pub(crate) fn discrete_data(n: usize, seed: u64) -> SurvivalDataset {
        let mut rng = crate::rng::rng_from(seed);
        let rows = (0..n)
            .map(|_| {
                let x = vec![f64::from(rng.random_range(0..2u8))];
                let a = rng.random_range(0..2u8);
                let shift = if a == 1 { 1 } else { 0 } + x[0] as u32;
                let t = rng.random_range(1..=4u32) + shift;
                let c = rng.random_range(2..=8u32);
                let cause = if rng.random::<f64>() < 0.6 { 1 } else { 2 };
                let (time, event) = if t <= c { (t, cause) } else { (c, 0) };
                ObservationRecord {
                    time: f64::from(time),
                    event,
                    treatment: a,
                    covariates: x,
                }
            })
            .collect();
        SurvivalDataset::new(rows, vec!["x".into()]).unwrap()
    }

    #[test]
    fn gap_small_and_first_order() {
        let d = discrete_data(200, 1);
        for idx in [0, 17, 101] {
            let c1 = gateaux_fd_check(&d, idx, 1e-4, Cause::One, 5.0).unwrap();
            assert!(c1.gap <= 5e-2 * (1.0 + c1.eif.abs()), "{c1:?}");
            let c2 = gateaux_fd_check(&d, idx, 5e-5, Cause::One, 5.0).unwrap();
            let ratio = c2.gap / c1.gap;
            assert!(
                (0.3..=0.7).contains(&ratio),
                "ratio {ratio} ({c1:?}, {c2:?})"
            );
        }
    }

    #[test]
    fn no_perturbation_direction() {
        let d = discrete_data(200, 2);
        let q = vec![1.0 / 200.0; 200];
        assert!(
            gateaux_fd_direction(&d, &q, 1e-4, Cause::Two, 5.0)
                .unwrap()
                .abs()
                <= 1e-10
        );
        let eif = plug_in_eif(&d, Cause::Two, 5.0).unwrap();
        let mean = eif.iter().sum::<f64>() / eif.len() as f64;
        assert!(mean.abs() <= 1e-10, "mean {mean}");
    }

    #[test]
    fn sparse_cell_rejected() {
        let d = discrete_data(12, 3);
        assert!(matches!(
            gateaux_fd_check(&d, 0, 1e-4, Cause::One, 5.0),
            Err(Error::SparseCell { .. })
        ));
    }
}
