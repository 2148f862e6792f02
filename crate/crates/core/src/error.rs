use core::fmt;

use crate::state::State;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    InvalidParams(&'static str),
    /// A state is not part of the model's state space.
    InvalidState { state: State, reason: &'static str },
    /// A kernel row is malformed (probabilities, duplicates, missing row).
    InvalidKernel(&'static str),
    /// The tail descriptor can neither sum the series nor certify divergence.
    TailUndecidable,
    /// Value iteration hit `max_iter` before the convergence test passed.
    MaxIterExceeded { iterations: usize, last_change: f64 },
    /// A candidate value function leaves the band `0 <= v <= G`.
    BadCandidate { state: State, value: f64 },
    /// Two runs that must describe the same problem do not.
    ModelMismatch(&'static str),
    /// The kernel certifies that the target expectation is `+inf`.
    DivergentTarget,
    /// Analytic evaluation is not available for this model/policy pair.
    AnalyticUnavailable(&'static str),
    /// A closed-form oracle was requested outside its parameter regime.
    WrongRegime(&'static str),
    /// The truncation error bound exceeds the requested accuracy.
    BudgetExceeded { budget: f64, limit: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::InvalidState { state, reason } => {
                write!(f, "invalid state {}: {reason}", state.coord())
            }
            Error::InvalidKernel(msg) => write!(f, "invalid kernel: {msg}"),
            Error::TailUndecidable => write!(f, "tail expectation is undecidable"),
            Error::MaxIterExceeded { iterations, last_change } => write!(
                f,
                "no convergence after {iterations} iterations (last change {last_change:e})"
            ),
            Error::BadCandidate { state, value } => write!(
                f,
                "candidate value {value} at state {} is outside [0, G]",
                state.coord()
            ),
            Error::ModelMismatch(msg) => write!(f, "model mismatch: {msg}"),
            Error::DivergentTarget => write!(f, "target expectation is +infinity"),
            Error::AnalyticUnavailable(msg) => write!(f, "analytic evaluation unavailable: {msg}"),
            Error::WrongRegime(msg) => write!(f, "wrong parameter regime: {msg}"),
            Error::BudgetExceeded { budget, limit } => {
                write!(f, "error budget {budget:e} exceeds limit {limit:e}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
