use std::fmt;

use rexch_core::Error;
use serde_json::json;

/// Failure of a run, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// Outside the physical domain of the models (exit 3).
    Domain(String),
    /// A solver failed to converge (exit 4).
    NonConvergence(String),
    /// No parameter reached the target band (exit 5).
    Calibration {
        message: String,
        trace: Vec<(f64, f64)>,
    },
    Io(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Calibration { .. } => 5,
            CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Domain(_) => "physics-domain",
            CliError::NonConvergence(_) => "non-convergence",
            CliError::Calibration { .. } => "calibration",
            CliError::Io(_) => "io",
        }
    }

    /// One-line JSON diagnostic for standard error.
    pub fn diagnostic(&self) -> String {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Calibration { trace, .. } = self {
            v["trace"] = json!(trace
                .iter()
                .map(|(c, d)| json!({ "c_rep": c, "delta_delta0": d }))
                .collect::<Vec<_>>());
        }
        v.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m)
            | CliError::Domain(m)
            | CliError::NonConvergence(m)
            | CliError::Io(m) => f.write_str(m),
            CliError::Calibration { message, .. } => f.write_str(message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => CliError::Config(m),
            Error::Domain(m) => CliError::Domain(m),
            Error::NonConvergence(m) => CliError::NonConvergence(m),
            Error::Calibration { message, trace } => CliError::Calibration { message, trace },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
