use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("clever payoff evaluation would move action {action} below zero agents")]
    NegativeCount { action: usize },

    #[error("step-size error: renormalization drift {drift:e} exceeds {limit:e}")]
    StepSize { drift: f64, limit: f64 },

    #[error("rest-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    RestPoint {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("state space too large: {states} states exceeds cap {cap}")]
    CapExceeded { states: u128, cap: u128 },

    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("stationary solver did not converge (residual {residual:e})")]
    NotConverged { residual: f64 },

    #[error("non-tangent path derivative at segment {segment}: coordinate sum {sum:e}")]
    NonTangent { segment: usize, sum: f64 },

    #[error("support of x does not match the requested face")]
    SupportMismatch,
}

pub type Result<T> = std::result::Result<T, Error>;
