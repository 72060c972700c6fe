use bmapinf::ctmc::CtmcError;
use bmapinf::lyapunov::LyapunovError;
use bmapinf::sim::SimError;
use bmapinf::ModelError;
use serde::Serialize;

/// Exit status for a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Bad input: unreadable file, invalid model, inconsistent options.
    Input = 2,
    /// A numerical or pathwise check that should never fail did.
    Internal = 3,
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub status: Status,
    pub code: String,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: &'a str,
    exit_status: i32,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

impl CliError {
    pub fn input(code: &str, message: impl Into<String>) -> Self {
        Self {
            status: Status::Input,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn internal(code: &str, message: impl Into<String>) -> Self {
        Self {
            status: Status::Internal,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ErrorReport {
            error: ErrorBody {
                code: &self.code,
                message: &self.message,
                exit_status: self.status as i32,
            },
        })
        .expect("error report serializes")
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SolveFailed(_) => Self::internal(e.code(), e.to_string()),
            _ => Self::input(e.code(), e.to_string()),
        }
    }
}

impl From<CtmcError> for CliError {
    fn from(e: CtmcError) -> Self {
        match e {
            CtmcError::NumericalFailure { .. } | CtmcError::Reducible { .. } => Self::internal(e.code(), e.to_string()),
            _ => Self::input(e.code(), e.to_string()),
        }
    }
}

impl From<LyapunovError> for CliError {
    fn from(e: LyapunovError) -> Self {
        match e {
            LyapunovError::CertificateFailed { .. } => Self::internal(e.code(), e.to_string()),
            _ => Self::input(e.code(), e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::OrderingViolated { .. } | SimError::Background(_) => Self::internal(e.code(), e.to_string()),
            _ => Self::input(e.code(), e.to_string()),
        }
    }
}
