//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left} and {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("degenerate sample: row {row} has zero norm")]
    DegenerateSample { row: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("row {row} of {rows}-row matrix is not a probability distribution (sum {sum})")]
    NotADistribution { row: usize, rows: usize, sum: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{file}:{line}: {message}")]
    Data {
        file: String,
        line: usize,
        message: String,
    },

    #[error("sample alignment: {0}")]
    Alignment(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error: 1 usage/config, 2 data validation,
    /// 3 numeric or training failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data { .. }
            | Error::DegenerateSample { .. }
            | Error::LabelOutOfRange { .. }
            | Error::Alignment(_)
            | Error::Checkpoint(_)
            | Error::Io(_) => 2,
            Error::Trial { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
