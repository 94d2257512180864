//! Run manifests: config hash, per-file checksums, timing and failure markers.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((sha256_hex(&bytes), bytes.len() as u64))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub class: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// SHA-256 of the echoed config with every default filled in.
    pub config_hash: String,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub status: String,
    pub failure: Option<Failure>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn start(subcommand: &str, config_echo: &str, threads: usize) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_hash: sha256_hex(config_echo.as_bytes()),
            threads,
            started_unix: unix_now(),
            finished_unix: None,
            status: "running".to_string(),
            failure: None,
            files: Vec::new(),
        }
    }

    /// Checksums `dir/rel` and records it.
    pub fn add_file(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let (sha256, bytes) = sha256_file(&dir.join(rel))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            bytes,
            sha256,
        });
        Ok(())
    }

    pub fn succeed(&mut self) {
        self.status = "ok".to_string();
        self.finished_unix = Some(unix_now());
    }

    pub fn fail(&mut self, err: &Error) {
        let class = err.class();
        self.status = "failed".to_string();
        self.failure = Some(Failure {
            class: format!("{class:?}").to_lowercase(),
            exit_code: class.exit_code(),
            message: err.to_string(),
        });
        self.finished_unix = Some(unix_now());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path,
            message: e.to_string(),
        })
    }
}
