//! Output directory handling: resolution, the run lock and file writes.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const LOCK_NAME: &str = ".drddl.lock";
const DEFAULT_DIR: &str = "drddl-out";

/// `--out` wins; otherwise the config's `output_dir`, joined onto the
/// output root when relative; otherwise `<root>/drddl-out`. The root is
/// `--out-root` / `DRDDL_OUT`, falling back to the current directory.
pub fn resolve_dir(flag: Option<&Path>, config: Option<&Path>, root: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    let root = root.unwrap_or(Path::new("."));
    match config {
        Some(p) if p.is_absolute() => p.to_path_buf(),
        Some(p) => root.join(p),
        None => root.join(DEFAULT_DIR),
    }
}

/// An output directory held exclusively for the lifetime of the value.
#[derive(Debug)]
pub struct OutputDir {
    path: PathBuf,
    lock: PathBuf,
}

impl OutputDir {
    pub fn acquire(path: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        let lock = path.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(CliError::Locked(path)),
            Err(e) => return Err(CliError::io(&lock, e)),
        }
        Ok(OutputDir { path, lock })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.file(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}
