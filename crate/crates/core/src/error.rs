use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A network, layer or pipeline configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an operation precondition (e.g. image dims not a multiple of 4).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Bad user data: annotations outside the image, empty metric lists, ...
    #[error("input error: {0}")]
    Input(String),

    /// Internal shape disagreement between tensors that should match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed or incompatible weight / optimizer-state file.
    #[error("load error: {0}")]
    Load(String),

    /// Non-finite loss or gradient during training.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
