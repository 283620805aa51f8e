//! Error type shared across the crate.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the library.
#[derive(Debug)]
pub enum Error {
    /// Two tensor shapes that must agree do not.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A dimension constraint was violated (e.g. an oversized matrix).
    Dimension(String),
    /// An index (token id, class target, unit id) is out of range.
    Index(String),
    /// Invalid configuration value.
    Config(String),
    /// Invalid runtime input (token sequence too long, empty calibration set, ...).
    Input(String),
    /// An operation was called in a state that forbids it (double drop, missing gradient, ...).
    State(String),
    /// A count exceeds what the current state can provide.
    Size(String),
    /// Malformed data file; carries a line number when one is known.
    Data { line: Option<usize>, message: String },
    /// Checkpoint or report file damage.
    Format(String),
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch between {left:?} and {right:?}")
            }
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Index(m) => write!(f, "index error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Input(m) => write!(f, "input error: {m}"),
            Error::State(m) => write!(f, "state error: {m}"),
            Error::Size(m) => write!(f, "size error: {m}"),
            Error::Data { line: Some(n), message } => write!(f, "data error at line {n}: {message}"),
            Error::Data { line: None, message } => write!(f, "data error: {message}"),
            Error::Format(m) => write!(f, "format error: {m}"),
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

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
