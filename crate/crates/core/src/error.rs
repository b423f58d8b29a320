use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-finite or invalid value in column `{column}` at row {row}")]
    NonFiniteValue { column: String, row: usize },
    #[error("event code {code} at row {row} is not one of 0, 1, 2")]
    BadEventCode { row: usize, code: i64 },
    #[error("treatment code {code} at row {row} is not 0 or 1")]
    BadTreatmentCode { row: usize, code: i64 },
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("cannot build {k} nonempty folds from {n} observations")]
    InfeasibleFolds { n: usize, k: usize },

    #[error("design matrix is singular")]
    Singular,
    #[error("no events of the requested type in the training data")]
    NoEvents,
    #[error(
        "optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})"
    )]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("logistic regression data are (quasi-)separable")]
    SeparableData,
    #[error("only one treatment arm present")]
    SingleArm,
    #[error("infeasible learner parameters: {0}")]
    InfeasibleParams(String),

    #[error("combined hazard jump {jump} at time {time} is not below 1")]
    SuperunitJump { time: f64, jump: f64 },
    #[error("positivity breach: {what} = {value:.3e} below floor {eta}")]
    PositivityBreach {
        what: &'static str,
        value: f64,
        eta: f64,
    },
    #[error("degenerate denominator: chi estimate {0:.3e} is not positive")]
    DegenerateDenominator(f64),
    #[error("covariate cell (a={a}, x={x}) has {count} observations, need at least {min}")]
    SparseCell {
        a: u8,
        x: String,
        count: usize,
        min: usize,
    },

    #[error("fold {fold} too small: {reason}")]
    FoldTooSmall { fold: usize, reason: String },
    #[error("quadrature did not reach tolerance {tol:.1e} (estimated error {err:.3e})")]
    QuadratureFailure { tol: f64, err: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
