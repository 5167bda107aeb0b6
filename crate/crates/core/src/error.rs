use thiserror::Error;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("point lies outside the hull by {excess:e} along direction ({}, {})", direction[0], direction[1])]
    OutsideHull { direction: [f64; 2], excess: f64 },

    #[error("query outside domain: {0}")]
    Domain(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
