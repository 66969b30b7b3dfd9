use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid token id {0} (byte vocabulary holds 0..=255)")]
    InvalidToken(u32),

    #[error("model mismatch: ciphertext was produced with a different checkpoint")]
    ModelMismatch,

    #[error("message not memorized within {epochs} epochs")]
    BudgetExceeded { epochs: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}
