//! Checkpoint and optimizer-sidecar files.

use std::path::{Path, PathBuf};

use lf_core::net::{
    decode_checkpoint, decode_checkpoint_expecting, encode_checkpoint, ModelState, NetworkConfig,
};
use lf_core::train::{decode_moments, encode_moments, AdamState};

use crate::{runtime, validation, CliError};

pub fn checkpoint_name(iteration: u64) -> String {
    format!("ckpt_{iteration:07}.sadn")
}

/// Sidecar path next to a checkpoint: same stem, `.sadm` extension.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("sadm")
}

pub fn save(path: &Path, cfg: &NetworkConfig, state: &ModelState<f32>) -> Result<(), CliError> {
    std::fs::write(path, encode_checkpoint(cfg, state))
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<(NetworkConfig, ModelState<f32>), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    decode_checkpoint(&bytes).map_err(|e| validation(format!("{}: {e}", path.display())))
}

pub fn load_expecting(path: &Path, cfg: &NetworkConfig) -> Result<ModelState<f32>, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    decode_checkpoint_expecting(&bytes, cfg)
        .map_err(|e| validation(format!("{}: {e}", path.display())))
}

pub fn save_sidecar(
    path: &Path,
    cfg: &NetworkConfig,
    state: &ModelState<f32>,
    adam: &AdamState<f32>,
) -> Result<(), CliError> {
    std::fs::write(path, encode_moments(cfg, state, adam))
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn load_sidecar(path: &Path, cfg: &NetworkConfig) -> Result<AdamState<f32>, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    decode_moments(&bytes, cfg).map_err(|e| validation(format!("{}: {e}", path.display())))
}
