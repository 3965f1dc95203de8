//! `manifest.json` written next to every subcommand's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Ctx;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    /// SHA-256 of the effective parameters as canonical JSON.
    pub config_hash: String,
    pub params: serde_json::Map<String, serde_json::Value>,
    /// Input path → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Collects what a subcommand read, wrote and was configured with.
pub struct Run {
    out: PathBuf,
    subcommand: String,
    seed: u64,
    started_at: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    params: serde_json::Map<String, serde_json::Value>,
}

impl Run {
    pub fn start(ctx: &Ctx, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let mut run = Run {
            out: out.to_owned(),
            subcommand: ctx.command.to_owned(),
            seed: ctx.seed,
            started_at: chrono::Utc::now().to_rfc3339(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            params: serde_json::Map::new(),
        };
        run.param("seed", ctx.seed);
        Ok(run)
    }

    pub fn input<'a>(&mut self, path: &'a Path) -> &'a Path {
        self.inputs.push(path.to_owned());
        path
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("parameter serializes");
        self.params.insert(key.to_owned(), v);
    }

    /// Path of an output file inside the run directory.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_owned());
        self.out.join(name)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let mut inputs = BTreeMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), file_digest(p)?);
        }
        let mut outputs = BTreeMap::new();
        for name in &self.outputs {
            outputs.insert(name.clone(), file_digest(&self.out.join(name))?);
        }
        let canonical = serde_json::to_string(&self.params).expect("params serialize");
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            subcommand: self.subcommand,
            seed: self.seed,
            config_hash: sha256_hex(canonical.as_bytes()),
            params: self.params,
            inputs,
            outputs,
            started_at: self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
        };
        let path = self.out.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}
