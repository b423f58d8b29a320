use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Event of interest `j`; the other cause is the competing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Cause {
    One,
    Two,
}

impl Cause {
    pub fn code(self) -> u8 {
        match self {
            Cause::One => 1,
            Cause::Two => 2,
        }
    }

    pub fn other(self) -> Cause {
        match self {
            Cause::One => Cause::Two,
            Cause::Two => Cause::One,
        }
    }

    pub fn index(self) -> usize {
        self.code() as usize - 1
    }

    pub const BOTH: [Cause; 2] = [Cause::One, Cause::Two];
}

impl TryFrom<u8> for Cause {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Cause::One),
            2 => Ok(Cause::Two),
            other => Err(format!("cause must be 1 or 2, got {other}")),
        }
    }
}

impl From<Cause> for u8 {
    fn from(c: Cause) -> u8 {
        c.code()
    }
}

/// Which exit type a hazard model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardTarget {
    Cause1,
    Cause2,
    Censoring,
}

impl HazardTarget {
    /// Event code counted as an event for this hazard.
    pub fn event_code(self) -> u8 {
        match self {
            HazardTarget::Cause1 => 1,
            HazardTarget::Cause2 => 2,
            HazardTarget::Censoring => 0,
        }
    }
}

impl From<Cause> for HazardTarget {
    fn from(c: Cause) -> Self {
        match c {
            Cause::One => HazardTarget::Cause1,
            Cause::Two => HazardTarget::Cause2,
        }
    }
}

/// One observation `(T̃, Δ̃, A, X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub time: f64,
    /// 0 = censored, 1 or 2 = observed cause.
    pub event: u8,
    pub treatment: u8,
    pub covariates: Vec<f64>,
}

impl ObservationRecord {
    /// `N_j(t) = 1(T̃ <= t, Δ̃ = j)`.
    pub fn counting(&self, cause: Cause, t: f64) -> bool {
        self.event == cause.code() && self.time <= t
    }

    pub fn at_risk(&self, t: f64) -> bool {
        self.time >= t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    rows: Vec<ObservationRecord>,
    covariate_names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(rows: Vec<ObservationRecord>, covariate_names: Vec<String>) -> Result<Self> {
        let d = covariate_names.len();
        if d == 0 {
            return Err(Error::InvalidData(
                "at least one covariate is required".into(),
            ));
        }
        for (i, r) in rows.iter().enumerate() {
            if !(r.time.is_finite() && r.time >= 0.0) {
                return Err(Error::NonFiniteValue {
                    column: "time".into(),
                    row: i,
                });
            }
            if r.event > 2 {
                return Err(Error::BadEventCode {
                    row: i,
                    code: r.event as i64,
                });
            }
            if r.treatment > 1 {
                return Err(Error::BadTreatmentCode {
                    row: i,
                    code: r.treatment as i64,
                });
            }
            if r.covariates.len() != d {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} covariates, expected {d}",
                    r.covariates.len()
                )));
            }
            if let Some(l) = r.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    column: covariate_names[l].clone(),
                    row: i,
                });
            }
        }
        Ok(Self {
            rows,
            covariate_names,
        })
    }

    pub fn rows(&self) -> &[ObservationRecord] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &ObservationRecord {
        &self.rows[i]
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> SurvivalDataset {
        SurvivalDataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
        }
    }

    pub fn count_events(&self, code: u8) -> usize {
        self.rows.iter().filter(|r| r.event == code).count()
    }

    pub fn count_treated(&self) -> usize {
        self.rows.iter().filter(|r| r.treatment == 1).count()
    }

    pub fn covariate_column(&self, l: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.covariates[l]).collect()
    }

    /// Copy with covariate `l` replaced by `f(x_l)`.
    pub fn map_covariate(&self, l: usize, f: impl Fn(f64) -> f64) -> SurvivalDataset {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.covariates[l] = f(r.covariates[l]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: f64, event: u8, treatment: u8, x: f64) -> ObservationRecord {
        ObservationRecord {
            time,
            event,
            treatment,
            covariates: vec![x],
        }
    }

    #[test]
    fn validation_catches_bad_codes() {
        let names = vec!["x".to_string()];
        assert!(matches!(
            SurvivalDataset::new(vec![rec(1.0, 3, 0, 0.0)], names.clone()),
            Err(Error::BadEventCode { row: 0, code: 3 })
        ));
        assert!(matches!(
            SurvivalDataset::new(vec![rec(1.0, 1, 2, 0.0)], names.clone()),
            Err(Error::BadTreatmentCode { .. })
        ));
        assert!(matches!(
            SurvivalDataset::new(vec![rec(f64::NAN, 1, 0, 0.0)], names.clone()),
            Err(Error::NonFiniteValue { .. })
        ));
        assert!(SurvivalDataset::new(vec![rec(1.0, 1, 0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn counting_and_risk_indicators() {
        let r = rec(2.0, 1, 1, 0.0);
        assert!(r.counting(Cause::One, 2.0));
        assert!(!r.counting(Cause::One, 1.9));
        assert!(!r.counting(Cause::Two, 5.0));
        assert!(r.at_risk(2.0));
        assert!(!r.at_risk(2.1));
    }
}
