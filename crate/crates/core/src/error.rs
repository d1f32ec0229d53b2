use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Young condition violated: integrand exponent {integrand} + driver exponent {driver} <= 1")]
    YoungCondition { integrand: f64, driver: f64 },

    #[error("point is off the manifold by {distance:e} (limit {limit:e})")]
    OffManifold { distance: f64, limit: f64 },

    #[error("vector field is not tangent at the initial point (normal component {0:e})")]
    NotTangent(f64),

    #[error("projection failed to converge at node {node}")]
    ProjectionFailed { node: usize },

    #[error("degenerate frame at node {node}")]
    DegenerateFrame { node: usize },

    #[error("no admissible foliation: {0}")]
    NoAdmissibleFoliation(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
