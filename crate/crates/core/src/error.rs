use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid viewing window: {reason} (corners: {corners})")]
    InvalidWindow { reason: String, corners: String },

    #[error("degenerate correspondence: points {indices:?} of the {side} quadruple are collinear")]
    Collinear {
        side: &'static str,
        indices: [usize; 3],
    },

    #[error(
        "singular linear system while estimating homography (pivot {pivot:e} in column {column})"
    )]
    SingularSystem { column: usize, pivot: f64 },

    #[error("homography is not invertible (|det| = {det:e})")]
    NotInvertible { det: f64 },

    #[error("point ({x}, {y}) maps to the line at infinity")]
    AtInfinity { x: f64, y: f64 },

    #[error("slope {slope} is below the minimum {min}")]
    SlopeTooSmall { slope: f64, min: f64 },

    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("no window found: {0}")]
    NoWindowFound(String),

    #[error("window estimation failed: {0}")]
    EstimationFailed(String),

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("record {0:?} has no window annotation")]
    MissingWindow(String),

    #[error("record {0:?} has no split assignment")]
    Unassigned(String),

    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
