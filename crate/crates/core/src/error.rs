use thiserror::Error;

/// Errors produced by the template engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested mean response cannot be reached by tilting the reference histogram.
    #[error("target mean {target} is outside the attainable interval; violated bound {bound}")]
    Saturation { target: f64, bound: f64 },

    /// Learning produced no live block in any region.
    #[error("degenerate template: {0}")]
    DegenerateTemplate(String),

    #[error("rule corpus: {0}")]
    Corpus(String),

    #[error("schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
