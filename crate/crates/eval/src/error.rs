use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Model(#[from] kinchain_models::ModelError),
    #[error(transparent)]
    Core(#[from] kinchain_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub(crate) fn invalid(msg: impl Into<String>) -> EvalError {
    EvalError::InvalidArgument(msg.into())
}
