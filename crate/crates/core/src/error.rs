use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Each variant maps to a stable short code (see [`Error::code`]) that the
/// CLI prints and converts to an exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("{what} `{code}` not found")]
    Lookup { what: String, code: String },
    #[error("table `{table}` has no entry for ({a}, {b})")]
    Coverage { table: String, a: String, b: String },
    #[error("{0}")]
    UnsupportedFormat(String),
    #[error("{0}")]
    TooShort(String),
    #[error("non-finite activation in layer `{0}`")]
    Numeric(String),
    #[error("{0}")]
    UndefinedLoss(String),
    #[error("{0}")]
    UndefinedCorrelation(String),
    #[error("{0}")]
    InsufficientData(String),
    #[error("{0}")]
    Capability(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub fn lookup(what: &str, code: &str) -> Self {
        Error::Lookup {
            what: what.to_string(),
            code: code.to_string(),
        }
    }

    /// Stable identifier of the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Lookup { .. } => "lookup",
            Error::Coverage { .. } => "coverage",
            Error::UnsupportedFormat(_) => "unsupported-format",
            Error::TooShort(_) => "too-short",
            Error::Numeric(_) => "numeric",
            Error::UndefinedLoss(_) => "undefined-loss",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Capability(_) => "capability",
        }
    }

    /// Process exit status for this error class. 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Parse { .. } => 4,
            Error::Validation(_) => 5,
            Error::Lookup { .. } => 6,
            Error::Coverage { .. } => 7,
            Error::UnsupportedFormat(_) => 8,
            Error::TooShort(_) => 9,
            Error::Numeric(_) => 10,
            Error::UndefinedLoss(_) => 11,
            Error::UndefinedCorrelation(_) => 12,
            Error::InsufficientData(_) => 13,
            Error::Capability(_) => 14,
        }
    }
}
