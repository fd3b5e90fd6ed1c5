//! Crate-wide error type.

use crate::physics::LossBreakdown;

/// Errors produced by the pikan library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration value cannot be realized (width underflow, bad counts, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// External data could not be ingested; names the first offending record.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A metric is undefined for the given inputs (e.g. zero-norm reference).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// The optimizer produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: total loss {total} ({breakdown:?})")]
    Diverged {
        epoch: usize,
        total: f64,
        breakdown: Box<LossBreakdown>,
    },

    /// An internal invariant that should be unreachable was violated.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
