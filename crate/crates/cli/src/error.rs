use std::fmt;
use std::path::Path;

use serde::Serialize;

/// Failure reported to the user as one JSON object on standard error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    /// Pipeline module the failure originated in, e.g. `trace-store`.
    pub module: &'static str,
    pub file: Option<String>,
    pub record: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn new(module: &'static str, message: impl fmt::Display) -> Self {
        Self {
            module,
            file: None,
            record: None,
            message: message.to_string(),
        }
    }

    pub fn file(mut self, path: &Path) -> Self {
        self.file = Some(path.display().to_string());
        self
    }

    pub fn record(mut self, id: impl Into<String>) -> Self {
        self.record = Some(id.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.module)?;
        if let Some(file) = &self.file {
            write!(f, " {file}")?;
        }
        if let Some(record) = &self.record {
            write!(f, " record `{record}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for CliError {}

pub(crate) fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::new("cli", e).file(path)
}
