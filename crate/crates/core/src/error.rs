use thiserror::Error;

/// Errors raised while building or evaluating port-Hamiltonian models.
#[derive(Debug, Clone, Error)]
pub enum PhsError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite {quantity}{}", time_suffix(*.time))]
    NonFinite {
        quantity: &'static str,
        time: Option<f64>,
    },

    #[error("state outside model domain: {0}")]
    OutOfDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular matrix ({what}), condition estimate {condition:e}")]
    Singular { what: &'static str, condition: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("state blew up at t = {time} (|x| = {norm:e})")]
    BlowUp { time: f64, norm: f64 },

    #[error("invalid port selection: {0}")]
    InvalidPort(String),

    #[error("system is not lossless: {0}")]
    NotLossless(String),

    #[error("schedule infeasible: {0}")]
    ScheduleInfeasible(String),

    #[error("tracking controller diverged in phase {phase}: error {error:e} exceeds {limit:e}")]
    TrackingDivergence {
        phase: &'static str,
        error: f64,
        limit: f64,
    },
}

impl PhsError {
    /// True for failures of the numerics (as opposed to malformed inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PhsError::NonFinite { .. }
                | PhsError::Singular { .. }
                | PhsError::NoConvergence { .. }
                | PhsError::BlowUp { .. }
                | PhsError::TrackingDivergence { .. }
                | PhsError::ScheduleInfeasible(_)
                | PhsError::OutOfDomain(_)
        )
    }
}

fn time_suffix(time: Option<f64>) -> String {
    time.map(|t| format!(" at t = {t}")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, PhsError>;
