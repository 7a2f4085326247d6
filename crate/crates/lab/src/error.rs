use difflab::LabError;
use thiserror::Error;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
/// I/O errors and failed selftest checks.
pub const EXIT_FAILURE: u8 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Lab(#[from] LabError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Lab(e) => match e {
                LabError::Validation { .. }
                | LabError::Domain { .. }
                | LabError::DegenerateMarginal { .. }
                | LabError::Unsupported(_)
                | LabError::Json(_) => EXIT_VALIDATION,
                LabError::Integrator(_)
                | LabError::NonFinite { .. }
                | LabError::SingularScore { .. }
                | LabError::InvalidScore(_)
                | LabError::StepSize { .. } => EXIT_NUMERICAL,
                LabError::Io(_) | LabError::Csv(_) => EXIT_FAILURE,
            },
        }
    }
}

/// Rejects non-finite results so they surface as numerical failures.
pub fn finite(what: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Numerical(format!("{what} is {v}")))
    }
}
