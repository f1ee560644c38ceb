use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants are grouped by how the CLI reports them: configuration problems
/// (bad shapes/settings, exit code 2), numeric failures (non-finite values,
/// domain violations, exit code 3), and IO failures (exit code 4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible dimensions between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid experiment configuration; the message names the field.
    #[error("config error: {0}")]
    Config(String),

    /// Input data without enough variation to process (e.g. constant series).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A problem size beyond a documented hard limit.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    /// A setup this toolkit deliberately does not handle, such as
    /// underdetermined separation with fewer channels than components.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Unsupported(_) | Error::SizeLimit(_) => 2,
            Error::Shape(_) | Error::Domain(_) | Error::Numeric(_) | Error::Degenerate(_) => 3,
            Error::Io { .. } | Error::Parse { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
