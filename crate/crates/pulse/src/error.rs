use std::io;
use std::path::{Path, PathBuf};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const DIVERGED: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: corrupt clip file: {reason}", path.display())]
    CorruptFile { path: PathBuf, reason: String },
    #[error("{}: unsupported clip format version {found:?}", path.display())]
    VersionMismatch { path: PathBuf, found: String },
    #[error("{}: {reason}", path.display())]
    Csv { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] pulse_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use pulse_core::Error as C;
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Io { .. } | Error::CorruptFile { .. } | Error::VersionMismatch { .. } | Error::Csv { .. } => exit::IO,
            Error::Core(C::InvalidConfig(_) | C::InvalidBand(_) | C::InvalidSpec(_)) => exit::CONFIG,
            Error::Core(C::Diverged { .. }) => exit::DIVERGED,
            Error::Core(_) => exit::FAILURE,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
