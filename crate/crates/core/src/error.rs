use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {row}: {message}")]
    Ingestion {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("class index {index} outside declared range [0, {num_classes})")]
    ClassOutOfRange { index: i64, num_classes: usize },

    #[error("insufficient labeled data: labeled pool of {pool} for {num_classes} classes")]
    InsufficientLabeledData { pool: usize, num_classes: usize },

    #[error("{path}: line {line}: expected {expected} values, found {found}")]
    VectorDimension {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: line {line}: {message}")]
    VectorParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical divergence in {layer}")]
    NumericalDivergence { layer: String },

    #[error("epoch {epoch}: {source}")]
    Training {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("duplicate member seed {0}")]
    DuplicateMemberSeed(u64),

    #[error("class-set mismatch: {0} vs {1} classes")]
    ClassSetMismatch(usize, usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no runs")]
    NoRuns,

    #[error("{file}: malformed manifest field `{field}`")]
    Manifest { file: PathBuf, field: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse failure classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NumericalDivergence { .. } => ErrorClass::Numerical,
            Error::Training { source, .. } => source.class(),
            Error::Config(_) | Error::DuplicateMemberSeed(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}
