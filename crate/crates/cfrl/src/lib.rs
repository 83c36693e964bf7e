//! Experiment harness for the counterfactual-augmentation pipeline: config
//! loading, subcommand implementations, CSV/JSON reporting, and parallel
//! execution of independent experiment cells.

pub mod commands;
pub mod config;
pub mod report;
pub mod runs;

pub use config::RunConfig;

use std::path::PathBuf;

use cfrl_core::agents::{AgentError, TrainError};
use cfrl_core::envsim::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// CLI exit code: 0 ok, 2 config error, 3 missing artifact, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::MissingArtifact(_) => 3,
            HarnessError::Numeric(_) | HarnessError::Io(_) => 4,
        }
    }

    /// One-line JSON error record for machine consumption.
    pub fn machine_line(&self) -> String {
        serde_json::json!({ "error": self.to_string(), "exit_code": self.exit_code() })
            .to_string()
    }
}

impl From<TrainError> for HarnessError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Env(EnvError::InvalidConfig(m)) => HarnessError::Config(format!("env: {m}")),
            TrainError::Agent(AgentError::InvalidConfig(m)) => {
                HarnessError::Config(format!("agent: {m}"))
            }
            other => HarnessError::Numeric(other.to_string()),
        }
    }
}

impl From<AgentError> for HarnessError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::InvalidConfig(m) => HarnessError::Config(m),
            other => HarnessError::Numeric(other.to_string()),
        }
    }
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::InvalidConfig(m) => HarnessError::Config(m),
            other => HarnessError::Numeric(other.to_string()),
        }
    }
}
