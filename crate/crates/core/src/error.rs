use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error("invalid scheme: {0}")]
    Scheme(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("size limit exceeded: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
