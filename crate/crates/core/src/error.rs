use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, dimension mismatches, or inconsistent inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A metric whose denominator would be empty.
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    /// A weights file failed validation.
    #[error("load error at byte offset {offset}: {reason}")]
    Load { offset: u64, reason: String },

    #[error("dataset error in {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by user input rather than the run itself.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::MetricUndefined(_) | Error::Load { .. } | Error::Dataset { .. } | Error::Json(_)
        )
    }
}
