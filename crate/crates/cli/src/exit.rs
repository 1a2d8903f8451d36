//! Error classification and process exit codes.

use std::fmt;

use calibench_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage,
    Data,
    Provider,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Usage => 1,
            ExitKind::Data => 2,
            ExitKind::Provider => 3,
        }
    }
}

/// A failure with its exit class and, inside a pipeline, the stage it came from.
#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub stage: Option<String>,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(kind: ExitKind, source: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            stage: None,
            source: source.into(),
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn in_stage(mut self, stage: &str) -> Self {
        self.stage.get_or_insert_with(|| stage.to_string());
        self
    }

    pub fn code(&self) -> i32 {
        self.kind.code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = &self.stage {
            write!(f, "stage `{s}` failed: ")?;
        }
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for CliError {}

pub fn classify(e: &Error) -> ExitKind {
    match e {
        Error::MissingCredentials { .. } | Error::UnknownProvider(_) | Error::Provider(_) => ExitKind::Provider,
        Error::InvalidArgument(_) => ExitKind::Usage,
        _ => ExitKind::Data,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::new(classify(&e), e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ExitKind::Data, e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
