use reel_core::io::FormatError;
use reel_core::learn::LearnError;
use reel_core::model::ModelError;
use reel_core::sim::SimError;

/// Exit status classes: 1 usage, 2 data or format, 3 numerical divergence.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Divergence(m) => m,
        }
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        CliError::Data(msg.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::NonFinite { .. } => CliError::Divergence(e.to_string()),
            LearnError::Sim(s) => s.into(),
            LearnError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
