use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("time {t} outside the scheduler domain [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("marginal at t = {t} is degenerate (empirical targets need t >= {floor})")]
    DegenerateMarginal { t: f64, floor: f64 },

    #[error("integrator: {0}")]
    Integrator(String),

    #[error("non-finite state at step {step} of path {path}")]
    NonFinite { step: usize, path: usize },

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("singular score for token {token} at forward time {t}")]
    SingularScore { token: usize, t: f64 },

    #[error("score value {0} must be < 2 for positive reverse rates")]
    InvalidScore(f64),

    #[error("step size {step} diverges: objective rose on {count} consecutive iterations")]
    StepSize { step: f64, count: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Validation { field: field.into(), reason: reason.into() }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LabError::Domain { .. } | LabError::Validation { .. } | LabError::Unsupported(_) | LabError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
