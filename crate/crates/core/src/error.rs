use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("input shape mismatch: expected {expected} values, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("label {label} out of range for {classes} outputs")]
    Label { label: usize, classes: usize },

    #[error("batch is empty")]
    EmptyBatch,

    /// A value that must be nonzero (or positive) is not.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("path enumeration needs {needed} paths, cap is {cap}")]
    EnumerationTooLarge { needed: u128, cap: usize },

    #[error("basis path {index} has zero value")]
    DegeneratePath { index: usize },

    #[error("weight allocation got a zero ratio for basis path {index}")]
    DegenerateUpdate { index: usize },

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("skeleton plan is defective: {0}")]
    DefectivePlan(String),

    #[error("training failed at epoch {epoch}, step {step}: {source}")]
    Training {
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path} is truncated: {msg}")]
    Truncated { path: PathBuf, msg: String },

    #[error("image/label count mismatch: {images} images, {labels} labels")]
    Pairing { images: usize, labels: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
