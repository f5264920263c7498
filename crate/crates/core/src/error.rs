use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {0} lies outside the domain of the metric")]
    OutOfDomain(Complex64),
    #[error("sign case (ε={epsilon}, λ={lambda}) not supported here: {reason}")]
    InvalidSignCase {
        epsilon: i8,
        lambda: i8,
        reason: &'static str,
    },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no constant solution: ελ must be −1 and c nonzero")]
    NoConstantSolution,
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular input at node ({0}, {1})")]
    SingularInput(usize, usize),
    #[error("path leaves the domain at {0}")]
    PathExitsDomain(Complex64),
    #[error("loop is not closed")]
    PathNotClosed,
    #[error("initial frame violates its normalization: {0}")]
    InitCondition(String),
    #[error("degenerate geometry at vertex {vertex}: {what}")]
    Degenerate { what: &'static str, vertex: usize },
    #[error("derivative bound |F'| < |G'| violated at {0}")]
    DerivativeBound(Complex64),
    #[error("function is not strictly convex at node {0:?}")]
    NonConvex(Vec<usize>),
    #[error("{0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
