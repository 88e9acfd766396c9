use std::io;

use prqr_core::data_model::DataError;
use prqr_core::feature_select::{SelectError, VariantError};
use prqr_core::ingest::IngestError;
use prqr_core::pipeline::PipelineError;
use prqr_core::ridge::{PersistError, RidgeError};
use prqr_core::synth::SynthError;
use prqr_core::temporal::TemporalError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("solve: {0}")]
    Solve(String),
    #[error("audit: {0}")]
    Audit(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data(_) => 2,
            CliError::Solve(_) => 3,
            CliError::Audit(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_errors!(
    DataError,
    IngestError,
    TemporalError,
    SynthError,
    SelectError
);

impl From<RidgeError> for CliError {
    fn from(e: RidgeError) -> Self {
        match e {
            RidgeError::InsufficientData | RidgeError::SingularSystem | RidgeError::StaleModel => {
                CliError::Solve(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ridge(r) => r.into(),
            PipelineError::ConstraintViolation { .. } => CliError::Audit(e.to_string()),
            PipelineError::InvalidOptions(m) => CliError::Config(m),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<VariantError> for CliError {
    fn from(e: VariantError) -> Self {
        match e {
            VariantError::Select(s) => s.into(),
            VariantError::Pipeline(p) => p.into(),
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        match e {
            PersistError::Io(io) => CliError::Io(io),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let audit: CliError = PipelineError::ConstraintViolation {
            row: 3,
            detail: "x".into(),
        }
        .into();
        assert_eq!(audit.exit_code(), 4);
        let solve: CliError = PipelineError::Ridge(RidgeError::SingularSystem).into();
        assert_eq!(solve.exit_code(), 3);
        let data: CliError = IngestError::Empty.into();
        assert_eq!(data.exit_code(), 2);
        assert!(data.to_string().contains("no rows"));
    }
}
