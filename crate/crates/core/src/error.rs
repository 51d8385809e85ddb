use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
