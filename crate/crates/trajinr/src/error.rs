//! Error types shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Tensor/matrix shape disagreement; carries both offending shapes.
    #[error("dimension mismatch: {context}: {lhs:?} vs {rhs:?}")]
    Dimension {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Invalid configuration value (non-positive frequency, bad preset, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid runtime input (unsorted ages, empty selection, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Numeric failure (non-finite loss, NaN input, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Binary file format violation; offset is the byte position of the problem.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("cohort not found: {0}; run `simulate` first")]
    MissingCohort(String),

    #[error("fitted INR not found: {0}; run `fit` first")]
    MissingInr(String),
}

impl Error {
    pub fn dimension(context: impl Into<String>, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            context: context.into(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
