use thiserror::Error;

/// Errors produced by game construction, projection, and simulation.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point is not a member of the set (coordinate {index}, violation {violation:.3e})")]
    NotInSet { index: usize, violation: f64 },

    #[error("invalid convex set: {0}")]
    InvalidSet(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("communication graph is disconnected")]
    Disconnected,

    #[error("state diverged (non-finite value) at t = {t:.6}, step {step}")]
    Diverged { t: f64, step: usize },

    #[error("solver did not converge within {max_iter} iterations (residual {residual:.3e})")]
    NoConvergence { max_iter: usize, residual: f64 },

    #[error(
        "double-integrator dynamics require unbounded local sets; \
         agent {agent} has a bounded set (enable box dualization or drop the bound)"
    )]
    BoundedLocalSet { agent: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
