//! Content-addressed run directories.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FORMAT: &str = "fairshift-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    /// Path as written in the config.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    /// sha256 over command, config and inputs; names the directory.
    pub run_hash: String,
    pub artifacts: Vec<String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Files read by a command, in first-use order.
#[derive(Debug, Default)]
pub struct Inputs {
    files: Vec<InputFile>,
}

impl Inputs {
    pub fn record(&mut self, shown: &Path, actual: &Path) -> CliResult<()> {
        let path = shown.display().to_string();
        if self.files.iter().any(|f| f.path == path) {
            return Ok(());
        }
        let sha256 = sha256_file(actual)?;
        self.files.push(InputFile { path, sha256 });
        Ok(())
    }
}

pub struct RunDir {
    pub path: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    /// Names `<out>/<command>-<hash>` for a command whose effective config
    /// and inputs are known.
    pub fn create<C: Serialize>(out: &Path, command: &str, seed: u64, config: &C, inputs: Inputs) -> CliResult<Self> {
        let config = serde_json::to_value(config).map_err(|e| CliError::runtime(e.to_string()))?;
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(&config).map_err(|e| CliError::runtime(e.to_string()))?);
        for f in &inputs.files {
            h.update([0]);
            h.update(f.path.as_bytes());
            h.update([0]);
            h.update(f.sha256.as_bytes());
        }
        let run_hash = hex::encode(h.finalize());
        let path = out.join(format!("{command}-{}", &run_hash[..16]));
        Ok(RunDir {
            path,
            manifest: Manifest {
                format: MANIFEST_FORMAT.into(),
                version: MANIFEST_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                seed,
                config,
                inputs: inputs.files,
                run_hash,
                artifacts: Vec::new(),
            },
        })
    }

    /// Registers artifact `name` and returns its path, creating directories
    /// on first use.
    pub fn artifact(&mut self, name: &str) -> CliResult<PathBuf> {
        let p = self.path.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
        if !self.manifest.artifacts.iter().any(|a| a == name) {
            self.manifest.artifacts.push(name.to_string());
        }
        Ok(p)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.artifact(name)?;
        std::fs::write(&p, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
        self.write_text(name, &(text + "\n"))
    }

    /// Writes manifest.json last and returns the directory.
    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.manifest.artifacts.sort();
        let m = self.manifest.clone();
        self.write_json("manifest.json", &m)?;
        Ok(self.path)
    }
}
