//! Command-line front end: config handling, CSV output and the `solve`,
//! `simulate`, `oracle`, `perturb`, `budget` and `scan` commands.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use thiserror::Error;

pub use commands::*;
pub use config::RunConfig;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const INVALID_ARGUMENT: i32 = 2;
    pub const INFEASIBLE_DESIGN: i32 = 3;
    pub const ACCURACY: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cavitybus_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use cavitybus_core::Error as E;
        match self {
            CliError::Config(_) => exit::INVALID_ARGUMENT,
            CliError::Core(E::InvalidArgument(_)) => exit::INVALID_ARGUMENT,
            CliError::Core(E::InfeasibleDesign { .. }) => exit::INFEASIBLE_DESIGN,
            CliError::Core(E::Accuracy(_)) => exit::ACCURACY,
            CliError::Io(_) => exit::IO,
        }
    }

    pub(crate) fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

/// Writes every file of `out` into `dir`, creating it if needed.
pub fn write_files(dir: &Path, out: &CommandOutput) -> Result<(), CliError> {
    if out.files.is_empty() {
        return Ok(());
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, contents) in &out.files {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
