//! Error types shared across the crate.

use std::fmt;

/// One configuration problem, tied to the dotted key path that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration:\n{}", join_issues(.0))]
    Config(Vec<ConfigIssue>),
    #[error("trace line {line}: {message}")]
    Trace { line: u64, message: String },
    #[error("workload: {0}")]
    Workload(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config(vec![ConfigIssue::new(key, message)])
    }

    /// Process exit code for this error: 2 for configuration problems, 3 for I/O
    /// and trace problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Workload(_) => 2,
            SimError::Trace { .. } | SimError::Io(_) => 3,
        }
    }
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
