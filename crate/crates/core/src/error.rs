use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on caller-supplied data was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative numerical routine failed to converge.
    #[error("numerical failure: {what} (dim {dim}, residual {residual:.3e})")]
    NumericalFailure {
        what: &'static str,
        dim: usize,
        residual: f64,
    },

    /// Malformed text input (CSV and friends).
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    /// Structurally invalid serialized artifact (model, problem file).
    #[error("format error: {0}")]
    FormatError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::FormatError(msg.into())
    }
}
