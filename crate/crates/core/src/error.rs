use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HernError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HernError {
    /// Spatial dimensions violate a divisibility or evenness requirement.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A scalar argument is outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Tensor shapes or channel counts do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl HernError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HernError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user configuration rather than by
    /// a failure while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HernError::Config(_) | HernError::Parameter(_) | HernError::Dimension(_)
        )
    }
}
