use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operation `{name}` declared with conflicting attributes: {detail}")]
    Conflict { name: String, detail: String },

    #[error("unknown operation `{0}`")]
    UnknownOperation(String),

    #[error("invalid search space `{space}`: {detail}")]
    InvalidSpace { space: String, detail: String },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: record {record}: {detail}")]
    Record {
        path: String,
        record: usize,
        detail: String,
    },

    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate task `{0}`: scores have zero variance")]
    Degenerate(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("divergence in task `{task}` at inner step {step}")]
    Divergence { task: String, step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown architecture {0}")]
    UnknownArchitecture(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("input error: {0}")]
    Input(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
