//! One writer per output directory, enforced with a lockfile.

use std::path::{Path, PathBuf};

use crate::{validation, CliError};

pub struct LockGuard {
    path: PathBuf,
}

/// Create the directory if needed and take its lock. Fails when another
/// process (or a crashed run) holds `.lock`.
pub fn acquire(dir: &Path) -> Result<LockGuard, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| validation(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(".lock");
    match std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
    {
        Ok(_) => Ok(LockGuard { path }),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(validation(format!(
            "{} is locked by another writer; remove {} if that run is dead",
            dir.display(),
            path.display()
        ))),
        Err(e) => Err(validation(format!(
            "cannot lock {}: {e}",
            dir.display()
        ))),
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
