use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numeric core.
///
/// Each variant maps onto one failure family so that callers (the CLI in
/// particular) can turn them into distinct exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor or image extents do not agree.
    Shape(String),
    /// An argument is outside its valid domain.
    InvalidArgument(String),
    /// Input data is inconsistent (missing class, wrong label, ...).
    Data(String),
    /// A numeric failure such as a non-finite loss.
    Numeric(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape mismatch: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl core::error::Error for Error {}
