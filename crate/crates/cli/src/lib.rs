//! Command-line front end: configuration, content-addressed output directories
//! and the subcommands.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use commands::{cmd_diagnose, cmd_estimate, cmd_irf, cmd_mc, cmd_relax_check, cmd_simulate, Outcome};
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nlirf::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for configuration or data problems, 3 for incompatible shocks, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        use nlirf::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                E::IncompatibleShock { .. } => 3,
                E::PathDiverged { .. }
                | E::Explosive(_)
                | E::Underdetermined { .. }
                | E::TooManyFailures { .. } => 4,
                E::DegenerateSample(_)
                | E::InvalidKnots(_)
                | E::OverparameterizedSieve { .. }
                | E::DimensionMismatch(_)
                | E::HorizonExceedsSample { .. }
                | E::UnknownDgp(_)
                | E::MissingInnovations
                | E::InvalidConfig(_)
                | E::Io(_)
                | E::Csv(_)
                | E::Parse { .. } => 2,
            },
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Resolved configuration of one command as written to `config.toml`.
pub fn echo<T: Serialize>(command: &str, section: &T) -> Result<String, CliError> {
    let mut table = toml::Table::new();
    let value = toml::Value::try_from(section).map_err(|e| CliError::Config(e.to_string()))?;
    table.insert(command.replace('-', "_"), value);
    toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))
}

/// First 16 hex digits of the SHA-256 of the echoed configuration.
pub fn digest(echoed: &str) -> String {
    hex::encode(Sha256::digest(echoed.as_bytes()))[..16].to_string()
}

/// Creates `<root>/<command>-<digest>` and writes the echoed configuration into it.
pub fn prepare_dir(root: &Path, command: &str, echoed: &str) -> Result<PathBuf, CliError> {
    let dir = root.join(format!("{command}-{}", digest(echoed)));
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join("config.toml");
    std::fs::write(&path, echoed).map_err(io_err(&path))?;
    Ok(dir)
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

pub(crate) fn create_file(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::create(path).map_err(io_err(path))
}
