use thiserror::Error;

/// Library-wide error type. Variants are grouped by how callers should react:
/// configuration/parameter problems are recoverable by fixing inputs, while
/// convergence-class failures indicate the requested computation did not
/// stabilize within its iteration budget.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported model/method combination: {0}")]
    Unsupported(String),

    #[error("infeasible threshold: {0}")]
    InfeasibleThreshold(String),

    #[error("alpha-infeasible weighted sample: {0}")]
    AlphaInfeasible(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no sign change over bracket [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("did not converge: {0}")]
    Convergence(String),

    /// Optimizer ran out of iterations; the best iterate found is attached so
    /// callers can inspect or reuse it.
    #[error("optimizer did not converge: {context}")]
    OptimizerStalled { context: String, best: Vec<f64> },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
