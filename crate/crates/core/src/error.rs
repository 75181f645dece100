use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: usize },

    #[error("backward called without a cached training forward pass")]
    NoForwardCache,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("column `{column}` has no observed cells")]
    EmptyColumn { column: String },

    #[error("column `{column}` has zero variance")]
    ZeroVariance { column: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset `{name}` has {actual:?} (rows, cols) but the catalog expects {expected:?}")]
    CatalogDimension {
        name: String,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("dataset file {path} is not available")]
    MissingFile { path: PathBuf },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
