//! Batch pipeline behind the `sexratio` executable.
//!
//! Every command reads a [`RunConfig`] and works inside its output
//! directory:
//!
//! ```text
//! <out>/world/      synthetic input bundle (synth)
//! <out>/fit/        chains, metadata and point estimates per model (fit)
//! <out>/project/    scenario tables (project)
//! <out>/births/     missing female births (births)
//! <out>/validate/   out-of-sample reports (validate)
//! <out>/diagnose/   convergence tables (diagnose)
//! ```
//!
//! Output files begin with a provenance line naming the code version and the
//! hash of the effective configuration.

mod commands;
mod config;
mod provenance;
mod store;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{births, diagnose, fit, project, synth, validate};
pub use config::{
    parse_models, parse_scenarios, InputPaths, RunConfig, StackMode, ValidationConfig,
    ValidationMode, Window,
};
pub use provenance::{config_hash, header_line, Provenance, VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error(transparent)]
    Core(#[from] sexratio_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn core<E: Into<sexratio_core::Error>>(e: E) -> Self {
        CliError::Core(e.into())
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingPrerequisite(_) => 3,
            CliError::Core(_) => 4,
            CliError::Io { .. } | CliError::Json { .. } => 5,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
