use serde::Serialize;
use yearslost::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Usage,
    Input,
    Compute,
}

/// A terminal error: its kind picks the exit status.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub kind: Kind,
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(kind: Kind, message: impl Into<String>) -> Self {
        let code = match kind {
            Kind::Usage => 2,
            Kind::Input => 3,
            Kind::Compute => 4,
        };
        Self {
            kind,
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(Kind::Input, message)
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Self::new(Kind::Compute, message)
    }

    /// The machine-readable object written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::InvalidConfig(_) => Kind::Usage,
            Error::MissingColumn(_)
            | Error::NonFiniteValue { .. }
            | Error::BadEventCode { .. }
            | Error::BadTreatmentCode { .. }
            | Error::InvalidData(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => Kind::Input,
            _ => Kind::Compute,
        };
        Self::new(kind, e.to_string())
    }
}
