use thiserror::Error;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("adaptive step collapsed to {h:e} at t = {t}")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integration exceeded {0} steps")]
    TooManySteps(usize),

    #[error("non-finite state encountered at t = {0}")]
    NonFinite(f64),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("shooting Jacobian is numerically singular (det = {0:e})")]
    SingularJacobian(f64),

    #[error("orbit is degenerate: x(t) is constant")]
    DegenerateOrbit,

    #[error("continuation step collapsed below the minimum step at {0}")]
    StepCollapse(String),

    #[error("seed orbit did not converge: {0}")]
    SeedNotConverged(String),

    #[error("not applicable: {0}")]
    NotApplicable(&'static str),

    #[error("branch switching failed at {0}")]
    SwitchFailed(String),

    #[error("extended Newton residual stagnated at {0:e}")]
    LostFoldCondition(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
