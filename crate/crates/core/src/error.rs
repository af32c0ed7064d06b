use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("failed to load language `{lang}`: {reason}")]
    Load { lang: String, reason: String },

    #[error("cannot split language `{lang}`: {reason}")]
    Split { lang: String, reason: String },

    #[error("unknown language `{0}`")]
    UnknownLanguage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("refusing to overwrite existing {0} (pass --force)")]
    Exists(PathBuf),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("round {round}, language `{lang}`: {source}")]
    InRound {
        round: usize,
        lang: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
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

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// True for errors caused by a non-finite loss or tensor value, at any nesting depth.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_) => true,
            Error::InRound { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    /// True for errors raised while validating input or configuration, before any work.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Exists(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
