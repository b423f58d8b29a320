use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{ObservationRecord, SurvivalDataset};
use crate::error::{Error, Result};

/// Maps CSV header names onto the dataset fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnSchema {
    pub time: String,
    pub event: String,
    pub treatment: String,
    /// Covariate columns; empty means "every other column, in file order".
    pub covariates: Vec<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            treatment: "treatment".into(),
            covariates: Vec::new(),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<SurvivalDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &ColumnSchema) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let time_col = find(&schema.time)?;
    let event_col = find(&schema.event)?;
    let treat_col = find(&schema.treatment)?;
    let cov_names: Vec<String> = if schema.covariates.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![time_col, event_col, treat_col].contains(i))
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        schema.covariates.clone()
    };
    if cov_names.is_empty() {
        return Err(Error::MissingColumn("<covariates>".into()));
    }
    let cov_cols = cov_names
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let real = |col: usize, name: &str| -> Result<f64> {
            rec.get(col)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonFiniteValue {
                    column: name.to_string(),
                    row,
                })
        };
        let code = |col: usize, name: &str| -> Result<i64> {
            let s = rec.get(col).unwrap_or("");
            if let Ok(v) = s.parse::<i64>() {
                return Ok(v);
            }
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v.fract() == 0.0 => Ok(v as i64),
                _ => Err(Error::NonFiniteValue {
                    column: name.to_string(),
                    row,
                }),
            }
        };
        let time = real(time_col, &schema.time)?;
        let event = code(event_col, &schema.event)?;
        if !(0..=2).contains(&event) {
            return Err(Error::BadEventCode { row, code: event });
        }
        let treatment = code(treat_col, &schema.treatment)?;
        if !(0..=1).contains(&treatment) {
            return Err(Error::BadTreatmentCode {
                row,
                code: treatment,
            });
        }
        let covariates = cov_cols
            .iter()
            .zip(&cov_names)
            .map(|(&c, name)| real(c, name))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ObservationRecord {
            time,
            event: event as u8,
            treatment: treatment as u8,
            covariates,
        });
    }
    SurvivalDataset::new(rows, cov_names)
}

/// Writes `time,event,treatment,<covariates>` with shortest round-trip float formatting.
pub fn write_dataset<W: Write>(writer: W, data: &SurvivalDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "event".into(), "treatment".into()];
    header.extend(data.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for r in data.rows() {
        let mut rec = vec![
            format!("{}", r.time),
            r.event.to_string(),
            r.treatment.to_string(),
        ];
        rec.extend(r.covariates.iter().map(|x| format!("{x}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, data: &SurvivalDataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(file), data)
}
