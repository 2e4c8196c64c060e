use thiserror::Error;

/// Errors produced anywhere in the training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("near-singular estimator: {0}")]
    NearSingular(String),

    #[error("poisoned parameters: {0}")]
    PoisonedParameters(String),

    #[error("update aborted: {0}")]
    AbortUpdate(String),

    #[error("invalid transform `{transform}`: {reason}")]
    InvalidTransform { transform: String, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(what: impl Into<String>) -> Result<T> {
    Err(Error::Shape(what.into()))
}
