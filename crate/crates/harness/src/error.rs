use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown experiment `{0}` (see `fracharm list`)")]
    UnknownExperiment(String),

    #[error("malformed config {path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },

    #[error("hypothesis rejected: {0}")]
    Hypothesis(String),

    #[error(transparent)]
    Core(#[from] fracharm::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 1 for a rejected hypothesis, 2 for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Hypothesis(_) | HarnessError::Core(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn field(field: &'static str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Field {
        field,
        reason: reason.into(),
    }
}

pub(crate) fn reject(reason: impl Into<String>) -> HarnessError {
    HarnessError::Hypothesis(reason.into())
}
