use std::path::PathBuf;

/// Errors of the harness, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] blockrip_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("assertion violated: {0}")]
    Assertion(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        use blockrip_core::Error as E;
        match self {
            Self::Core(E::Capacity { .. }) => EXIT_CAPACITY,
            Self::Core(E::CounterexampleInvalid(_) | E::Internal(_)) | Self::Assertion(_) => EXIT_ASSERTION,
            Self::Core(_) | Self::Io { .. } | Self::Parse { .. } | Self::Config(_) => EXIT_CONFIG,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}
