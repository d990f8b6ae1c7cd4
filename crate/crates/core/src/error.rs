use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quantity that is undefined for the requested weight or parameters.
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite state detected while stepping.
    #[error("instability detected at step {step}: {detail}")]
    Instability { step: usize, detail: String },

    #[error("degenerate stencil at particle {0}")]
    DegenerateStencil(usize),

    #[error("parse error in {path}, line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("config key `{key}`: {msg}")]
    ConfigKey { key: String, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn key(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::ConfigKey { key: key.into(), msg: msg.into() }
    }
}
