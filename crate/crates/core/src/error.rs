use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("exponent p = {p} must lie in (0, {d})")]
    ExponentOutOfRange { p: f64, d: f64 },

    #[error("points {i} and {j} coincide; deduplicate the cloud or merge their weights")]
    DuplicatePoints { i: usize, j: usize },

    #[error("weights are not a probability vector: {0}")]
    NotOnSimplex(String),

    #[error("size {size} exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("IFS images overlap: maps {i} and {j} have intersecting depth-1 hulls")]
    OverlappingImages { i: usize, j: usize },

    #[error("calibration bracket failed: relative capacity error {lo_err:.3e} at c = {lo}, {hi_err:.3e} at c = {hi}")]
    CalibrationBracket {
        lo: f64,
        hi: f64,
        lo_err: f64,
        hi_err: f64,
    },

    #[error("not enough points for {scheme}: need {needed}, got {got}")]
    InsufficientPoints {
        scheme: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("every radius lies below the resolution floor {floor:.3e}")]
    BelowResolution { floor: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
