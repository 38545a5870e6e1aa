use thiserror::Error;

/// Errors raised by constructions, solvers and certificates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular matrix (smallest singular value {0:e})")]
    Singular(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("chart escape: {0}")]
    ChartEscape(String),
    #[error("symbol {symbol} infeasible: {reason}")]
    Infeasible { symbol: usize, reason: String },
    #[error("no feasible symbol at step {step}: {reason}")]
    OracleFailure { step: usize, reason: String },
    #[error("branch mismatch at step {step}: {reason}")]
    BranchMismatch { step: usize, reason: String },
    #[error("newton did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("out of domain: {0}")]
    Domain(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("cover not certified: {0}")]
    NotCovered(String),
    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
