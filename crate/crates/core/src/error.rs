use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("degenerate vector: zero variance")]
    DegenerateVector,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("invalid label {label} for {class_count} classes")]
    InvalidLabel { label: usize, class_count: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid probability row {row}: {detail}")]
    InvalidProbabilities { row: usize, detail: String },

    #[error("models disagree on dimensions: {0}")]
    HeterogeneousModels(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown label column {0:?}")]
    UnknownColumn(String),

    #[error("{0} is undefined for a single-class label set")]
    SingleClass(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("model document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn out_of_range(what: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRange {
            what,
            detail: detail.into(),
        }
    }
}
