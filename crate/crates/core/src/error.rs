use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the graph engine.
///
/// Variants are grouped so callers (the CLI in particular) can map them onto
/// stable exit codes through [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fixture has no response for key `{0}`")]
    FixtureMiss(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("template error: {0}")]
    Template(String),

    #[error("graph is frozen; mutation rejected")]
    Frozen,

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("retrieval error: {0}")]
    Retrieval(String),

    #[error("corrupted graph file `{file}`: {reason}")]
    Corruption { file: String, reason: String },

    #[error("unsupported graph format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error on `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in `{}`: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    MissingFile,
    Provider,
    Integrity,
    Invalid,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ErrorCategory::MissingFile
            }
            Error::Transport { .. } | Error::FixtureMiss(_) => ErrorCategory::Provider,
            Error::Integrity(_) | Error::Corruption { .. } | Error::Version { .. } => {
                ErrorCategory::Integrity
            }
            _ => ErrorCategory::Invalid,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Precondition(_) => "precondition",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::FixtureMiss(_) => "fixture_miss",
            Error::Transport { .. } => "transport",
            Error::Template(_) => "template",
            Error::Frozen => "frozen",
            Error::Integrity(_) => "integrity",
            Error::Lookup(_) => "lookup",
            Error::Retrieval(_) => "retrieval",
            Error::Corruption { .. } => "corruption",
            Error::Version { .. } => "version",
            Error::Numeric(_) => "numeric",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
