//! Result files under `--out` and the manifest written beside them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    config: serde_json::Value,
    config_sha256: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

/// Collects the files of one run. The main result goes to `--out`; sidecars
/// are named `<stem>.<suffix>` in the same directory.
pub struct Outputs {
    dir: PathBuf,
    stem: String,
    inputs: Vec<PathBuf>,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(main: &Path) -> Result<Self> {
        let dir = main.parent().map(Path::to_path_buf).unwrap_or_default();
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let stem = main
            .file_stem()
            .and_then(|s| s.to_str())
            .context("--out needs a file name")?
            .to_string();
        Ok(Self {
            dir,
            stem,
            inputs: Vec::new(),
            written: Vec::new(),
        })
    }

    pub fn sidecar(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}.{suffix}", self.stem))
    }

    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    pub fn write_bytes(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(path, text.as_bytes())
    }

    /// Delimited table with a header row.
    pub fn write_table(
        &mut self,
        path: &Path,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.write_bytes(path, text.as_bytes())
    }

    /// Writes `<stem>.manifest.json` and returns its path.
    pub fn finish<C: Serialize>(self, command: &str, config: &C) -> Result<PathBuf> {
        let config = serde_json::to_value(config)?;
        let canonical = serde_json::to_string(&config)?;
        let digest = |paths: &[PathBuf], relative: bool| -> Result<Vec<FileDigest>> {
            paths
                .iter()
                .map(|p| {
                    let shown = if relative {
                        p.file_name()
                            .map(|f| f.to_string_lossy().into_owned())
                            .unwrap_or_default()
                    } else {
                        p.display().to_string()
                    };
                    Ok(FileDigest {
                        path: shown,
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: hex::encode(Sha256::digest(canonical.as_bytes())),
            config,
            inputs: digest(&self.inputs, false)?,
            outputs: digest(&self.written, true)?,
        };
        let path = self.sidecar("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}
