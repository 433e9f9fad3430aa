use std::io;
use std::path::{Path, PathBuf};

use autoguide_core::agent::AgentError;
use autoguide_core::context::ContextError;
use autoguide_core::sim::{EnvError, SimError};
use autoguide_core::store::StoreError;
use autoguide_core::template::TemplateError;
use autoguide_core::LmError;
use thiserror::Error;

/// Error classes of the command line, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or usage. Exit code 1.
    #[error("{0}")]
    Config(String),
    /// A file could not be read or written. Exit code 2.
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// A file was read but its contents are unusable. Exit code 2.
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    /// The language-model backend failed. Exit code 3.
    #[error("backend: {0}")]
    Backend(#[from] LmError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Data { .. } => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn data(path: &Path, message: impl ToString) -> Self {
        CliError::Data { path: path.to_path_buf(), message: message.to_string() }
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ContextError> for CliError {
    fn from(e: ContextError) -> Self {
        match e {
            ContextError::Lm(e) => CliError::Backend(e),
            ContextError::Template(e) => e.into(),
            ContextError::EmptyContext => CliError::Backend(LmError::MalformedResponse(e.to_string())),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Lm(e) => CliError::Backend(e),
            StoreError::Context(e) => e.into(),
            StoreError::Template(e) => e.into(),
            // Every pair failing means the model never produced usable output.
            StoreError::AllPairsFailed { .. } | StoreError::EmptyGuideline => {
                CliError::Backend(LmError::MalformedResponse(e.to_string()))
            }
            StoreError::SchemaVersionMismatch { .. } | StoreError::Malformed(_) => {
                CliError::Data { path: PathBuf::from("<store>"), message: e.to_string() }
            }
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::InvalidConfig(m) => CliError::Config(m),
            AgentError::Lm(e) => CliError::Backend(e),
            AgentError::Context(e) => e.into(),
            AgentError::Template(e) => e.into(),
            AgentError::UnparsableAction => CliError::Backend(LmError::MalformedResponse(e.to_string())),
            AgentError::Env(e) => e.into(),
            AgentError::Trajectory(e) => CliError::Data { path: PathBuf::from("<episode>"), message: e.to_string() },
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        CliError::Data { path: PathBuf::from("<suite>"), message: e.to_string() }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidArgument(m) => CliError::Config(m),
            SimError::Env(e) => e.into(),
        }
    }
}
