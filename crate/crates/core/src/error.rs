use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("trajectory diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("no steady state reached before t_max = {t_max}")]
    TimedOut { t_max: f64 },

    #[error("no condensate: gamma + |J| = {0} does not exceed 1")]
    NoCondensate(f64),

    #[error("coupling |J| must be nonzero for this operation")]
    DegenerateCoupling,

    #[error("first-order system is singular: {0}")]
    SingularLinearization(String),

    #[error("curve never reaches level {level} within [{lo}, {hi}]")]
    NoRoot { level: f64, lo: f64, hi: f64 },

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("yield too low: {failed} of {attempted} trials unresolved or non-stationary")]
    YieldTooLow { failed: usize, attempted: usize },

    #[error("value does not fit in {bits} bits")]
    Overflow { bits: usize },
}

impl Error {
    /// Stable machine-readable tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Diverged { .. } => "diverged",
            Error::TimedOut { .. } => "timed_out",
            Error::NoCondensate(_) => "no_condensate",
            Error::DegenerateCoupling => "degenerate_coupling",
            Error::SingularLinearization(_) => "singular_linearization",
            Error::NoRoot { .. } => "no_root",
            Error::InsufficientPoints { .. } => "insufficient_points",
            Error::TooFewSamples(_) => "too_few_samples",
            Error::YieldTooLow { .. } => "yield_too_low",
            Error::Overflow { .. } => "overflow",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
