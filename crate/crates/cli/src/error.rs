use std::fmt;
use std::process::ExitCode;

use mrta_core::backend::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Backend = 3,
}

/// An error plus the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn usage(message: impl fmt::Display) -> Self {
        Self::new(ExitKind::Usage, anyhow::anyhow!("{message}"))
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self::new(ExitKind::Data, error)
    }

    pub fn backend(error: impl Into<anyhow::Error>) -> Self {
        Self::new(ExitKind::Backend, error)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        Self::backend(e)
    }
}

pub trait Context<T> {
    fn data_err(self, what: impl fmt::Display) -> Result<T, CliError>;
}

impl<T, E> Context<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn data_err(self, what: impl fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::data(anyhow::Error::new(e).context(what.to_string())))
    }
}
