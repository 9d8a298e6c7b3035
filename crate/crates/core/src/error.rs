use thiserror::Error;

/// Errors raised by the measure, convex-function and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid convex function: {0}")]
    InvalidFunction(String),

    /// No martingale coupling exists; lists the constraint families that
    /// phase one could not satisfy.
    #[error("no martingale coupling exists (violated: {0})")]
    Infeasible(String),

    #[error("measures are not in convex order")]
    NotConvexOrder,

    /// Irreducibility failed: no martingale coupling moves mass from the
    /// source atom `x` to the target atom `y`.
    #[error("pair is not irreducible: no martingale coupling sends mass from {x:?} to {y:?}")]
    NotIrreducible { x: Vec<f64>, y: Vec<f64> },

    #[error("target {0:?} lies outside the interior of the slope hull")]
    OutOfRange(Vec<f64>),

    #[error("slopes do not affinely span R^{dim} (rank {rank})")]
    Rank { dim: usize, rank: usize },

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("no convergence after {iterations} iterations (marginal residual {marginal_residual:.3e}, barycenter residual {barycenter_residual:.3e})")]
    MaxIterations {
        iterations: usize,
        marginal_residual: f64,
        barycenter_residual: f64,
    },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("invalid options: {0}")]
    Options(String),

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

pub(crate) fn dim_check(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
