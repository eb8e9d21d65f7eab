use hardylab::error::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 1 invalid input, 2 numerical failure, 3 verification FAIL.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Integrity(_) | CliError::Missing(_) => 1,
            CliError::VerifyFailed(_) => 3,
            CliError::Core(e) => match e {
                CoreError::Lambda(_)
                | CoreError::Potential(_)
                | CoreError::BelowHardy { .. }
                | CoreError::Admissibility(_)
                | CoreError::Ambiguous(_)
                | CoreError::Mismatch(_) => 1,
                CoreError::Profile(_)
                | CoreError::Overflow(_)
                | CoreError::Solver(_)
                | CoreError::Smoothness { .. }
                | CoreError::Divergent(_)
                | CoreError::Fit(_) => 2,
            },
        }
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}
