use std::process::ExitCode;

use modalsurv::Error;

/// Command failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, unreadable or ill-formed input, missing data. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Numerical failure during a run. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::CIndexUndefined
            | Error::FoldCIndexUndefined { .. }
            | Error::CoxSeparation { .. }
            | Error::CoxNoConvergence { .. }
            | Error::SingularMatrix
            | Error::Numerical(_)
            | Error::InvalidPmf(_) => CliError::Runtime(msg),
            _ => CliError::Validation(msg),
        }
    }
}

pub fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}
