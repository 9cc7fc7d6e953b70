use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A region or edge does not fit inside the lattice window.
    #[error("outside lattice window: {0}")]
    Window(String),
    /// A requested computation would exceed a configured resource cap.
    #[error("size limit exceeded: {0}")]
    Size(String),
    /// A bisection was started on an interval that does not bracket the target.
    #[error("bisection does not bracket the target: {0}")]
    NonBracketing(String),
    /// A scale recursion does not grow.
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),
    /// A serialized artifact could not be parsed.
    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
