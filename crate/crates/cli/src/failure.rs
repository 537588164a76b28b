use std::process::ExitCode;

use waterwave::Error;

/// Command outcome other than success, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("{0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::NotConverged(_) => 2,
            Failure::Invalid(_) => 3,
            Failure::Numerical(_) => 4,
        })
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Mismatch(_) | Error::Index(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(format!("i/o: {e}"))
    }
}
