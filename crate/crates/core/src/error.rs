use std::path::PathBuf;

/// Errors produced anywhere in the scanner pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("sensor window at ({x:.2}, {y:.2}) px falls outside the {width}x{height} surface")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("unsupported integration region: {0}")]
    UnsupportedRegion(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ambiguous marker match: best score {best:.4}, runner-up {second:.4}")]
    AmbiguousMatch { best: f64, second: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss}); try a lower learning rate")]
    Diverged { epoch: usize, loss: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("control point {index} could not be located in the {which} height field")]
    MissingControlPoint { index: usize, which: &'static str },

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
