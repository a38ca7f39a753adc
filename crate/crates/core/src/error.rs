use std::io;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("record {record}: parse error: {message}")]
    Parse { record: usize, message: String },

    #[error("record {record}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        record: usize,
        expected: usize,
        found: usize,
    },

    #[error("record {record}: unknown label {aspect}={attribute}")]
    UnknownLabel {
        record: usize,
        aspect: String,
        attribute: String,
    },

    #[error("record {record}: duplicate id {id:?}")]
    DuplicateId { record: usize, id: String },

    #[error("record {record}: non-finite value in vector")]
    NonFinite { record: usize },

    #[error("schema has no aspects")]
    EmptySchema,

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dim { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("covariance matrix is not symmetric positive-definite")]
    NotPositiveDefinite,

    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: usize },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad user input rather than I/O or numerics.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Divergence { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
