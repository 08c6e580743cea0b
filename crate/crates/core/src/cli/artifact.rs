//! Output directory handling: lock file, hashed files and the manifest.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const LOCK_FILE: &str = ".csb-lab.lock";
pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to repeat a run. Passing a manifest as `--config`
/// replays it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub repeats: Option<usize>,
    pub config_sha256: String,
    /// Directory relative config paths are resolved against.
    pub config_dir: PathBuf,
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    pub total_evals: u64,
    /// Output file name to SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
}

struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// An output directory held for the duration of one command.
pub struct Artifact {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    _lock: Lock,
}

impl Artifact {
    /// Creates `dir` if needed and takes its lock. A second command on the
    /// same directory fails while the first holds the lock.
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let lock_path = dir.join(LOCK_FILE);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => CliError::Locked(dir.to_path_buf()),
                _ => CliError::Io(format!("{}: {e}", lock_path.display())),
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
            _lock: Lock(lock_path),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(bytes)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Renders into memory with `f`, then writes `name`.
    pub fn write_with<F, E>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), E>,
        E: std::fmt::Display,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Writes the manifest last so it can list every other file.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<Manifest, CliError> {
        manifest.files = self.files.clone();
        self.write_json(MANIFEST, &manifest)?;
        Ok(manifest)
    }
}
