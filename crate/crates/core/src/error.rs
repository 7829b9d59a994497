use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("frame {index}: {source}")]
    AtFrame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("env {index}: {source}")]
    AtEnv {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("could not parse a skill number from model output: {raw:?}")]
    Parse { raw: String },

    #[error("skill {id} is not in the library (raw output: {raw:?})")]
    OutOfRange { id: i64, raw: String },

    #[error("transport: {0}")]
    Transport(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unsupported {kind} version {found:?} (supported major: {supported})")]
    Version {
        kind: &'static str,
        found: String,
        supported: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn at_frame(self, index: usize) -> Self {
        Error::AtFrame {
            index,
            source: Box::new(self),
        }
    }

    pub fn at_env(self, index: usize) -> Self {
        Error::AtEnv {
            index,
            source: Box::new(self),
        }
    }
}
