use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("malformed scenario: {0}")]
    Config(String),
    #[error("unknown builtin scenario `{0}` (expected paper-1d, paper-2d, paper-2d-noparasitic or paper-2d-random)")]
    UnknownScenario(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("reconstruction failed: {0}")]
    Reconstruction(#[source] phase_kalman::Error),
    #[error("{0} verification suite(s) failed")]
    Verification(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status: 1 for bad input or I/O, 2 for a failed
    /// reconstruction, 3 for failed verification suites.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::UnknownScenario(_) | Self::Io { .. } => 1,
            Self::Reconstruction(_) => 2,
            Self::Verification(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
