//! Filesystem, image IO, and workflow layer on top of `lf-core`.
//!
//! Everything here is deterministic given a resolved config and seed:
//! commands never mutate their inputs and write only under their designated
//! output directory, guarded by a lockfile.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod lock;
pub mod run;
pub mod scene;

/// Command errors split by exit code: validation failures exit 1, runtime
/// or numeric failures exit 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub fn validation(msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

pub fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}
