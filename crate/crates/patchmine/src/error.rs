//! Library-wide error type for tensor, encoder, mining, and manifest operations.
//!
//! Text-protocol grammar errors live in [`crate::protocol::ProtocolError`]
//! because they map to a different process exit class.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands cannot be combined; both shapes are named.
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A tensor constructor or reshape received an invalid dimension list.
    #[error("invalid dimensions {dims:?}: {reason}")]
    InvalidDimensions { dims: Vec<usize>, reason: String },

    /// A configuration violates one of its divisibility or sizing rules.
    /// The violated rule is spelled out with the offending values.
    #[error("config error: {rule}")]
    Config { rule: String },

    /// A numeric argument is outside its valid range.
    #[error("{what} out of range: {value}")]
    Range { what: &'static str, value: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Parse failure in the tensor text format or a PPM stream.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
}

impl Error {
    pub fn config(rule: impl Into<String>) -> Self {
        Error::Config { rule: rule.into() }
    }
}
