use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("no sign change of {what} on [{lo}, {hi}]")]
    NoSignChange {
        what: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("{what} changes sign {} times on the bracket: {brackets:?}", brackets.len())]
    Ambiguous {
        what: &'static str,
        brackets: Vec<(f64, f64)>,
    },

    #[error("orbit did not converge after {iterations} iterations (last step {last_step:e})")]
    Convergence {
        iterations: usize,
        last_step: f64,
        partial_orbit: Vec<f64>,
    },

    #[error("non-finite value in {0}")]
    NumericalRange(String),

    #[error("state space of {} exceeds capacity {cap}", describe_count(*.count))]
    Capacity { count: u128, cap: u128 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
}

/// `u128::MAX` marks a count that saturated.
fn describe_count(count: u128) -> String {
    if count == u128::MAX {
        "more than 2^128 items".to_string()
    } else {
        format!("{count} items")
    }
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Precondition(_) => 1,
            Error::Capacity { .. } => 3,
            _ => 2,
        }
    }
}
