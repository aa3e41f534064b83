use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("empty subset: {0}")]
    EmptySubset(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("unsupported loss: {0}")]
    UnsupportedLoss(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
