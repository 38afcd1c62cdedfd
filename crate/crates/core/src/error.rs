use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("incomplete panel: missing cell (unit={unit}, time={time}, row_level={row_level}, col_level={col_level})")]
    IncompletePanel {
        unit: String,
        time: String,
        row_level: String,
        col_level: String,
    },

    #[error("duplicate cell at row {row}: (unit={unit}, time={time}, row_level={row_level}, col_level={col_level})")]
    DuplicateCell {
        row: usize,
        unit: String,
        time: String,
        row_level: String,
        col_level: String,
    },

    #[error("value {value} at (p={p}, r={r}, i={i}, t={t}) is outside the open interval (0, 1)")]
    Domain {
        p: usize,
        r: usize,
        i: usize,
        t: usize,
        value: f64,
    },

    #[error("{what} index {index} out of range (len {len})")]
    OutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{which} is not positive definite")]
    NotPositiveDefinite { which: &'static str },

    #[error("empty state {state}: total weight {weight}")]
    EmptyState { state: usize, weight: f64 },

    #[error("state collapse at iteration {iteration}: state {state} has total membership {weight:.3e}")]
    StateCollapse {
        iteration: usize,
        state: usize,
        weight: f64,
    },

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error("initial orientation is not orthogonal (max deviation {deviation:.3e})")]
    NotOrthogonal { deviation: f64 },

    #[error("all {} starts failed: {}", diagnostics.len(), diagnostics.join("; "))]
    FitFailed { diagnostics: Vec<String> },

    #[error("every grid cell failed ({} cells)", .0.len())]
    GridFailed(Vec<String>),

    #[error("unknown structure {name:?}; valid names are {valid}")]
    UnknownStructure { name: String, valid: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
