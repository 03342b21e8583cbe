use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] emdens_core::Error),
}

/// Process exit status for each class of failure.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use emdens_core::Error as C;
        match self {
            Error::Usage(_) => exit::USAGE,
            Error::Io { .. } | Error::Format { .. } | Error::Data(_) => exit::DATA,
            Error::Core(e) => match e {
                C::InvalidParameter(_) | C::TooManyClusters { .. } => exit::USAGE,
                C::Divergence { .. } | C::NonFiniteObjective | C::OptimizerStalled { .. } => exit::NUMERIC,
                _ => exit::DATA,
            },
        }
    }
}
