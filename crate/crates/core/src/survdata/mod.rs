//! Observed-data model, step-function calculus, cross-fitting folds and I/O.

mod dataset;
mod folds;
mod io;
mod report;
mod stepfn;

pub use dataset::{Cause, HazardTarget, ObservationRecord, SurvivalDataset};
pub use folds::{make_folds, FoldPlan};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, ColumnSchema};
pub use report::{normal_quantile, two_sided_p_value, Estimand, EstimateReport, FoldDiagnostic};
pub use stepfn::{stieltjes_integrate, stieltjes_integrate_between, StepFn};
