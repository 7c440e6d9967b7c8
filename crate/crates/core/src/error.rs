use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SriError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {value} outside [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The object lacks something the operation needs (a gradient, a noise log, ...).
    #[error("missing capability: {0}")]
    Capability(String),

    /// Iterates left the finite region. `index` is the last finite step.
    #[error("divergence after step {index} (time {time:.6}): {reason}")]
    Divergence {
        index: usize,
        time: f64,
        reason: String,
    },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SriError>;

impl SriError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SriError::Io {
            path: path.into(),
            source,
        }
    }
}
