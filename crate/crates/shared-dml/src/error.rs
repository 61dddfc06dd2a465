//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violated a precondition. Names the offending field.
    #[error("invalid configuration: field `{field}`: {message}")]
    Config { field: &'static str, message: String },

    /// Vector/matrix dimensions did not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A file could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A sampler could not produce a valid draw (e.g. no candidates).
    #[error("sampling error: {0}")]
    Sampling(String),

    /// A value outside its mathematical domain was supplied.
    #[error("domain error: {0}")]
    Domain(String),

    /// An embedding head produced the zero vector, which has no direction.
    #[error("degenerate embedding: pre-normalization vector is zero")]
    DegenerateEmbedding,

    /// Training produced a non-finite quantity. Names the tensor when known.
    #[error("training diverged: non-finite values in `{tensor}`")]
    Divergence { tensor: String },

    /// Tape and parameters disagree; indicates a bug in the caller.
    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl Error {
    pub fn config(field: &'static str, message: impl Into<String>) -> Self {
        Error::Config { field, message: message.into() }
    }

    pub fn dimension(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
