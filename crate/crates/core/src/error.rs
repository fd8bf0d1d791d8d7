use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point outside the domain: {0}")]
    OutsideDomain(String),

    /// Entropy and geometric generating functions are only defined on the open simplex.
    #[error("weights on the simplex boundary: {0}")]
    BoundaryEvaluation(String),

    #[error("front is not convex: {0}")]
    NonConvex(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("candidate undefined at {0:?}")]
    CandidateUndefined(Vec<f64>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
