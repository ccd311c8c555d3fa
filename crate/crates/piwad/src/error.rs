//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the piwad library.
///
/// The CLI maps these onto exit codes: configuration problems exit 2,
/// data/IO problems exit 3, numeric aborts exit 4.
#[derive(Debug, Error)]
pub enum PiwadError {
    /// Invalid configuration or contract violation (bad flag values,
    /// preconditions like `gamma >= 1` or `folds >= 3`).
    #[error("config error: {0}")]
    Config(String),

    /// Dataset or file problems: parse failures, shape mismatches,
    /// missing columns, checkpoint schema mismatches.
    #[error("data error: {0}")]
    Data(String),

    /// Array shape mismatch between two operands.
    #[error("shape mismatch: {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// A non-finite value appeared where finite arithmetic is required.
    #[error("numeric abort: {0}")]
    Numeric(String),

    /// Checkpoint schema-version mismatch.
    #[error("unsupported checkpoint schema {found:?} (expected {expected:?})")]
    CheckpointSchema { found: String, expected: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PiwadError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        PiwadError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        PiwadError::Shape {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PiwadError>;
