use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// An input violated a documented precondition or invariant.
    Domain(String),
    /// A non-finite value appeared during a computation. `node` is the
    /// tape index of the first offending intermediate when known.
    Numeric { node: Option<usize>, message: String },
    /// A file could not be parsed. `offset` is the byte position of the
    /// section that failed.
    Parse { offset: u64, message: String },
    /// A file was written by an incompatible format version.
    Version { found: u32, expected: u32 },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Numeric { node: Some(n), message } => {
                write!(f, "numeric error at tape node {n}: {message}")
            }
            Error::Numeric { node: None, message } => write!(f, "numeric error: {message}"),
            Error::Parse { offset, message } => {
                write!(f, "parse error at byte {offset}: {message}")
            }
            Error::Version { found, expected } => {
                write!(f, "format version mismatch: found v{found}, expected v{expected}")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
