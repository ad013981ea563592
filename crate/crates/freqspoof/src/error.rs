use std::io;
use std::path::{Path, PathBuf};

/// Failures of the IO layer and CLI, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad flags, config file or argument values.
    #[error("configuration error: {0}")]
    Config(String),
    /// Missing, malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),
    /// NaN/Inf during training or evaluation.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data or IO, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl From<freqspoof_core::Error> for Error {
    fn from(e: freqspoof_core::Error) -> Self {
        use freqspoof_core::Error as E;
        match e {
            E::InvalidArgument(m) => Error::Config(m),
            E::Shape(m) | E::Data(m) => Error::Data(m),
            E::Numeric(m) => Error::Numeric(m),
        }
    }
}
