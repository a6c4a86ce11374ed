use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("base point mismatch: {0}")]
    BaseMismatch(String),
    #[error("jet space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("multi-index order {got} exceeds jet order {max}")]
    OrderExceeded { got: u32, max: u32 },
    #[error("operation on an empty fiber")]
    EmptyFiber,
    #[error("zero series has no leading order")]
    ZeroSeries,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("domination verification failed: worst ratio {worst_ratio} at sample {witness:?}")]
    DominationFailed { worst_ratio: f64, witness: Vec<f64> },
    #[error("no uniformity exponent N <= {cap} fits the data: {detail}")]
    NoUniformityExponent { cap: u32, detail: String },
    #[error("compatibility not verified: {0}")]
    NotCompatible(String),
    #[error("flat-jet precondition failed: {0}")]
    JetNotFlat(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("constraint system infeasible at x = {x}")]
    InfeasibleAt { x: f64 },
    #[error("index bookkeeping mismatch: {0}")]
    IndexMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
