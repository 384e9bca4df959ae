use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the numeric kernels, graph I/O and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("memory ceiling exceeded: requested {requested} bytes with {live} live, ceiling {ceiling}")]
    MemoryCeiling { requested: u64, live: u64, ceiling: u64 },

    #[error("encoding scheme error: {0}")]
    Scheme(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input rather than an internal failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Validation(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::Scheme(_)
                | Error::Shape { .. }
        )
    }
}
