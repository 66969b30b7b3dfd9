use std::path::{Path, PathBuf};

use crate::config::ConfigError;
use crate::formats::FormatError;

/// Command failures, each with its own exit code and class name.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("message not memorized within {epochs} epochs; raise max_epochs or d")]
    BudgetExceeded { epochs: usize },
    #[error("ciphertext was produced with a different model checkpoint")]
    ModelMismatch,
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error(transparent)]
    Core(selm_core::Error),
}

impl From<selm_core::Error> for CliError {
    fn from(e: selm_core::Error) -> Self {
        match e {
            selm_core::Error::BudgetExceeded { epochs } => CliError::BudgetExceeded { epochs },
            selm_core::Error::ModelMismatch => CliError::ModelMismatch,
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        CliError::Format { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Format { .. } => 4,
            CliError::BudgetExceeded { .. } => 5,
            CliError::ModelMismatch => 6,
            CliError::Entropy(_) => 7,
            CliError::Core(_) => 8,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::BudgetExceeded { .. } => "budget",
            CliError::ModelMismatch => "model-mismatch",
            CliError::Entropy(_) => "entropy",
            CliError::Core(_) => "input",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
