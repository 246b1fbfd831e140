use std::fmt;

use tsl_core::TslError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_DIVERGENT: i32 = 4;

/// A failure with its process exit code.
#[derive(Debug, Clone)]
pub struct CliError {
    pub code: i32,
    pub step: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_CONFIG, step: None, message: message.into() }
    }

    pub fn divergent(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_DIVERGENT, step: None, message: message.into() }
    }

    pub fn in_step(mut self, step: &str) -> CliError {
        self.step.get_or_insert_with(|| step.to_string());
        self
    }

    pub fn kind(&self) -> &'static str {
        if self.code == EXIT_CONFIG {
            "ConfigError"
        } else {
            "StepError"
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.step {
            Some(s) => write!(f, "{} in step `{s}`: {}", self.kind(), self.message),
            None => write!(f, "{}: {}", self.kind(), self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<TslError> for CliError {
    fn from(e: TslError) -> CliError {
        let code = match &e {
            TslError::InvalidParameter(_)
            | TslError::UnknownKernel(_)
            | TslError::InvalidGrid(_)
            | TslError::Range(_)
            | TslError::Format(_)
            | TslError::Io(_) => EXIT_CONFIG,
            TslError::Divergent(_) => EXIT_DIVERGENT,
            _ => EXIT_HYPOTHESIS,
        };
        CliError { code, step: None, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::config(e.to_string())
    }
}
