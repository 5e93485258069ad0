use thiserror::Error;

/// Errors produced by the geometry, noising, warping and scoring routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("camera position coincides with its target")]
    DegeneratePose,

    #[error(
        "background sphere left {uncovered} of {total} pixels uncovered; increase sphere_points"
    )]
    InsufficientSphereDensity { uncovered: usize, total: usize },

    #[error("no valid correspondences between the two views")]
    NoCorrespondences,

    #[error("patch at ({x}, {y}) of size {size} does not fit in a {width}x{height} image")]
    PatchOutOfBounds {
        x: usize,
        y: usize,
        size: usize,
        width: usize,
        height: usize,
    },

    #[error("non-finite value at iteration {iteration}: {what}")]
    NumericalDivergence { iteration: usize, what: &'static str },

    #[error("PLY error: {0}")]
    Ply(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
