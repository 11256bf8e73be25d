//! Run manifests and atomic artifact writes.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tndp_core::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub version: String,
    pub started_unix: f64,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn begin(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Manifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            seed,
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now(),
            wall_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        self.wall_seconds = now() - self.started_unix;
        let path = out_dir.join(MANIFEST_FILE);
        write_atomic(&path, serde_json::to_string_pretty(&self).expect("manifest serializes").as_bytes())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value).expect("value serializes").as_bytes())
}
