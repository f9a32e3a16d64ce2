//! Error type shared by every module in the crate.
//!
//! Two outcomes that look like errors deliberately are not: a singular
//! matrix in [`crate::gf2`] (callers branch on it) and a refuted
//! certificate in [`crate::extractor_cert`] (a verdict, not a failure).
//! Everything else funnels through [`Error`].

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure cases surfaced to callers and, via the CLI, to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A request exceeds a configured enumeration or materialization cap.
    /// The work was refused before it started.
    #[error("budget refused: {what} needs {needed} but the cap is {cap}; {hint}")]
    Budget {
        what: String,
        needed: u128,
        cap: u128,
        hint: String,
    },

    /// An internal consistency check failed. This is a bug in the caller
    /// or in this crate, never a property of the input instance.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Malformed serialized input (matrix or program file).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A precondition on arguments does not hold.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for [`Error::InvalidArg`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArg(msg.into())
    }

    /// Shorthand for [`Error::Invariant`].
    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
