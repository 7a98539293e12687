//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by time-series, labeling, training, and I/O operations.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A DOY window selected no steps on the grid it was applied to.
    #[error("window [{lo}, {hi}] selects no steps on the time grid")]
    EmptyWindow { lo: i32, hi: i32 },

    /// A series had no valid observations where at least one was required.
    #[error("series for {context} has no valid observations")]
    AllInvalid { context: String },

    /// Two containers that must agree in size did not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// An input value violated a documented precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// Rule source failed to parse; carries position and expectation info.
    #[error("{0}")]
    Parse(#[from] crate::rules::ParseError),

    /// A rule referenced an index that was not computed for the pixel.
    #[error("rule references index {name} which is not available")]
    MissingIndex { name: String },

    /// A configuration file or value failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A serialized file did not match the expected layout.
    #[error("malformed file {path}: {detail}")]
    Format { path: String, detail: String },

    /// A serialized model or bundle declared an unsupported version.
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: String,
        found: u32,
        expected: u32,
    },

    /// A class name or id was not present in the class table.
    #[error("unknown class: {0}")]
    UnknownClass(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
