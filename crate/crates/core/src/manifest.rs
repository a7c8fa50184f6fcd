//! Run manifests.
//!
//! A manifest records what a command was asked to do (the full resolved
//! config and its hash, the seeds), what it read and wrote (SHA-256 digests),
//! and how long each stage took. Output digests depend only on the config and
//! inputs; timings are the only field expected to differ between re-runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::config_hash;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path as given for inputs; relative to the output directory for outputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub args: Vec<String>,
    pub package: String,
    pub version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<Timing>,
    /// Free-form resolved values, e.g. thresholds chosen from the dev set.
    pub notes: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seeds: Vec<u64>) -> Result<Self> {
        Ok(RunManifest {
            manifest_version: MANIFEST_VERSION,
            command: command.to_string(),
            args: Vec::new(),
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config),
            config: serde_json::to_value(config)?,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            notes: serde_json::Map::new(),
        })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let mut d = digest_file(path)?;
        d.path = path.display().to_string();
        self.inputs.push(d);
        Ok(())
    }

    /// Records `name` inside `out_dir`.
    pub fn add_output(&mut self, out_dir: &Path, name: &str) -> Result<()> {
        let mut d = digest_file(&out_dir.join(name))?;
        d.path = name.to_string();
        self.outputs.push(d);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.notes.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Runs `f` and records its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Output digests in a stable order, for reproducibility checks.
    pub fn output_digests(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = self
            .outputs
            .iter()
            .map(|d| (d.path.clone(), d.sha256.clone()))
            .collect();
        v.sort();
        v
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Writes to a sibling temporary file, syncs it, and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("'{}' is not a file path", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
