use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// An action that the current state does not allow.
    #[error("infeasible action: {0}")]
    Infeasible(String),

    /// The exact next-state expectation cannot be enumerated for this state.
    #[error("intractable expectation: {0}")]
    Intractable(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Training produced NaN or infinite values.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
