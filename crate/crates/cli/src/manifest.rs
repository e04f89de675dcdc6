//! Per-run manifest: effective config plus SHA-256 digests of every input
//! and output. No timestamps, so identical runs give identical manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub artifact_version: u32,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest-{command}.json")
}

/// Collects digests while a command runs, then writes the manifest.
pub struct Run {
    command: &'static str,
    out_dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    pub fn new(command: &'static str, out_dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Run {
            command,
            out_dir: out_dir.to_path_buf(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Records an input's digest. A missing file is reported as a missing
    /// upstream artifact with the role it plays.
    pub fn input(&mut self, role: &str, path: &Path) -> anyhow::Result<PathBuf> {
        if !path.is_file() {
            bail!("missing upstream artifact: {role} {} does not exist", path.display());
        }
        let bytes = std::fs::read(path).with_context(|| format!("reading {role} {}", path.display()))?;
        // Keyed by file name so runs in different directories compare equal.
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.inputs.insert(format!("{role}:{name}"), sha256_hex(&bytes));
        Ok(path.to_path_buf())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> anyhow::Result<PathBuf> {
        self.write(name, mobility_core::io::to_jsonl(records).as_bytes())
    }

    pub fn finish<C: Serialize>(self, config: &C) -> anyhow::Result<Manifest> {
        let m = Manifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            artifact_version: mobility_core::ARTIFACT_VERSION,
            config: serde_json::to_value(config)?,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let path = self.out_dir.join(manifest_name(self.command));
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        Ok(m)
    }
}
