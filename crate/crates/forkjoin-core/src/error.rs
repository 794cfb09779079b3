use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model or system parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A policy cannot be built for the given parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A policy dispatched outside its permitted server partition.
    #[error("policy contract violation: {0}")]
    PolicyContract(String),

    /// Quadrature or root finding failed to reach the requested tolerance.
    #[error("numerical error: {what} (achieved tolerance {achieved:e})")]
    Numerical { what: String, achieved: f64 },

    /// The replication optimization problem has no feasible point.
    #[error("infeasible: arrival intensity {lambda} exceeds threshold {threshold} (slack target {slack})")]
    Infeasible {
        lambda: f64,
        threshold: f64,
        slack: f64,
    },

    /// The replica-count cap is too small to contain the optimum.
    #[error("replica cap too small: minimizer at cap r_max={r_max}")]
    RMaxTooSmall { r_max: u32 },

    /// Not enough completed jobs for the requested statistics.
    #[error("insufficient data: {jobs} jobs, need at least {needed}")]
    InsufficientData { jobs: usize, needed: usize },

    /// Malformed serialized profile or other input data.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
