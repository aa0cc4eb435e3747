//! Output directory with atomic file writes and a run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::CliError;

pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
    started: Instant,
}

/// Writes via a temporary sibling and a rename, so readers never observe a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.partial"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root, files: Vec::new(), started: Instant::now() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Renders into memory with `render`, then stores the bytes at `name`
    /// (relative, `/`-separated).
    pub fn write_with<F>(&mut self, name: &str, render: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    {
        let mut buf = Vec::new();
        render(&mut buf)?;
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, &buf)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write_with(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value).map_err(std::io::Error::from)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    pub fn write_columns(&mut self, name: &str, header: &[&str], columns: &[&[f64]]) -> Result<(), CliError> {
        self.write_with(name, |buf| Ok(afc_core::io::write_columns(buf, header, columns)?))
    }

    /// Writes `manifest.json` last, listing every file written before it.
    pub fn finish(self, meta: ManifestMeta) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            tool: "afc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: meta.command,
            config_sha256: meta.config_sha256,
            config_source: meta.config_source,
            seed: meta.seed,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: self.files.clone(),
            notes: meta.notes,
        };
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::from)?;
        write_atomic(&self.root.join("manifest.json"), &bytes)?;
        Ok(manifest)
    }
}

pub struct ManifestMeta {
    pub command: String,
    pub config_sha256: String,
    pub config_source: Option<String>,
    pub seed: u64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config_source: Option<String>,
    pub seed: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}
