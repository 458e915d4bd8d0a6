//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file began with a magic value this crate does not handle.
    #[error("unsupported magic at byte {offset}: {found}")]
    UnsupportedMagic { offset: usize, found: String },

    /// A header field was missing or unparseable.
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },

    /// The pixel payload ended before the header-declared size.
    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },

    /// Paired files disagree on how many items they hold.
    #[error("count mismatch: {left_name} holds {left}, {right_name} holds {right}")]
    CountMismatch {
        left_name: String,
        left: usize,
        right_name: String,
        right: usize,
    },

    /// Two shapes that must agree do not.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// A numeric argument left its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A class referenced by a label or classifier does not exist.
    #[error("missing class {class}: {reason}")]
    MissingClass { class: usize, reason: String },

    /// Failure while evaluating one Monte-Carlo sample.
    #[error("sample {index} failed: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed serialized record (JSON certificate, manifest, ...).
    #[error("record error: {0}")]
    Record(String),
}

impl Error {
    /// Wraps an error with the Monte-Carlo sample index it occurred at.
    pub fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }
}
