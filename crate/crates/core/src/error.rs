use thiserror::Error;

/// Errors raised by the bounds machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular market state: smallest singular value {min_singular:e} below {threshold:e}")]
    SingularMarket { min_singular: f64, threshold: f64 },

    #[error("invalid risk aversion {0}: must be positive and different from 1")]
    InvalidRiskAversion(f64),

    #[error("inverse marginal utility is not strictly decreasing: {0}")]
    NonmonotoneInverse(String),

    #[error("non-finite state on path {path} at step {step}")]
    NonfinitePath { path: usize, step: usize },

    #[error("terminal utility undefined at wealth {wealth}")]
    WealthDomain { wealth: f64 },

    #[error("minimiser {zeta:e} sits at the edge of the bracket [{lo:e}, {hi:e}]")]
    BracketTooNarrow { zeta: f64, lo: f64, hi: f64 },

    #[error("policy iteration did not converge at time step {step}: residual {residual:e}")]
    NonconvergedPolicyIteration { step: usize, residual: f64 },

    #[error("malformed quantizer file at line {line}: {message}")]
    MalformedGridFile { line: usize, message: String },

    #[error("Fenchel-Young inequality violated on path {path}: slack {slack:e}")]
    FenchelViolation { path: usize, slack: f64 },

    #[error("non-finite market coefficient: {0}")]
    NonfiniteCoefficient(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
