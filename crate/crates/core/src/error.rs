use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A constructor or operation received data that breaks a documented
    /// invariant. `field` names the offending entry, e.g. `weights[0][1]`.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("time {t} is outside the schedule domain starting at {start}")]
    BeforeStart { t: f64, start: f64 },

    #[error("time {t} is outside the sampled trajectory domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("leader is not reachable: {0}")]
    NotReachable(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("state diverged at t = {t} (agent {agent}): {what}")]
    Divergence { t: f64, agent: usize, what: String },

    #[error("eigenvalue computation did not converge")]
    Eigen,
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
