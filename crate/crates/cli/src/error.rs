use std::path::Path;

use thiserror::Error;

/// Exit code for unreadable, malformed or invalid input.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for a computation that failed on valid input.
pub const EXIT_COMPUTE: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Compute(sigrf::Error),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// Parse failure in `path` with the 1-based position reported by serde.
    pub fn json(path: &Path, e: &serde_json::Error) -> Self {
        let full = e.to_string();
        let msg = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m);
        CliError::Input(format!(
            "{}: line {}, column {}: {msg}",
            path.display(),
            e.line(),
            e.column()
        ))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl From<sigrf::Error> for CliError {
    fn from(e: sigrf::Error) -> Self {
        use sigrf::Error as E;
        match e {
            E::InvalidModel(_)
            | E::Domain(_)
            | E::DimensionMismatch { .. }
            | E::Config(_)
            | E::Format(_)
            | E::Json(_)
            | E::InsufficientSamples { .. } => CliError::Input(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Compute(sigrf::Error::Io(e))
    }
}
