use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// file system and serialization failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Input(_) => 2,
            HarnessError::Io { .. } | HarnessError::Json { .. } | HarnessError::Csv { .. } => 3,
        }
    }
}

impl From<histarch_core::Error> for HarnessError {
    fn from(e: histarch_core::Error) -> Self {
        HarnessError::Config(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
