use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: cannot parse {text:?} as a number")]
    ParseSample {
        path: PathBuf,
        line: usize,
        text: String,
    },

    #[error("{0}: signal file contains no samples")]
    EmptySignal(PathBuf),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("window is constant-valued; higher moments are undefined")]
    ConstantWindow,

    #[error("dataset row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("dataset header: {0}")]
    MalformedHeader(String),

    #[error("unknown class label {0:?}")]
    UnknownLabel(String),

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),

    #[error("fold count {k} out of range: need 2 <= k <= {max}")]
    FoldCount { k: usize, max: usize },

    #[error("schema mismatch: expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("{0}")]
    Degenerate(String),

    #[error("csv: {0}")]
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
