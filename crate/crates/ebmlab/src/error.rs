//! Crate-wide error type.

use std::fmt;

/// Errors surfaced by the library. The CLI maps `Config` and `Parse` to
/// exit code 2, everything else to exit code 1.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration value or combination.
    Config(String),
    /// Array dimension mismatch.
    Shape(String),
    /// A NaN or infinity showed up where a finite value was required.
    NonFinite(String),
    /// Malformed input file; `line` is 1-based.
    Parse { line: usize, message: String },
    /// Checkpoint version/format problem.
    Checkpoint(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. })
    }
}
