use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("voltage amplitude must be positive, got {0} V")]
    NonPositiveVoltage(f64),

    /// The current maps divide by V²; they are undefined at the origin.
    #[error("voltage amplitude {amplitude} V is at or below the singularity guard {guard} V")]
    Singular { amplitude: f64, guard: f64 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: &'static str,
    },

    #[error("finite-difference step {step} V too large at amplitude {amplitude} V")]
    StepTooLarge { step: f64, amplitude: f64 },

    #[error("network assembly failed: {0}")]
    Assembly(String),

    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("state left the bounded region: {0}")]
    Diverged(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub(crate) fn check_param(name: &str, value: f64, reason: &'static str, ok: bool) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: name.to_string(),
            value,
            reason,
        })
    }
}
