use thiserror::Error;

use crate::dyadic::DyadicCell;

/// Errors raised by the brokerage simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A cell was used in a way its current state does not allow.
    #[error("cell {0} is not terminal")]
    NotTerminal(DyadicCell),

    /// Bisection beyond the representable depth.
    #[error("resource error: bisection to level {level} exceeds the maximum level {max}")]
    DepthExceeded { level: u32, max: u32 },

    /// Learner and environment disagree on the feedback model or call order.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Random construction failed to satisfy its postcondition within the retry budget.
    #[error("generation error: {0}")]
    Generation(String),

    /// An approximation ratio was requested for a pair whose first-best value is zero.
    #[error("approximation ratio undefined: first-best value is {0}")]
    UndefinedRatio(f64),

    /// A learner posted a price that is not a finite number in `[0, 1]`.
    #[error("learner fault at round {t}: posted price {price}")]
    LearnerFault { t: u64, price: f64 },

    /// A checked mathematical invariant failed.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
