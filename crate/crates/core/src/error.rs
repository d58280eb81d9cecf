use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, unknown preset names, malformed config files.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite state or a violated stability bound during stepping.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported dimension: {op} requires d = {expected}, got d = {got}")]
    UnsupportedDimension {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
