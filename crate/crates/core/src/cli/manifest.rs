//! `<command>.manifest.json`: the resolved config of a run and the SHA-256 of
//! every file it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT: &str = "factcheck-manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    /// Output-relative path to lowercase hex digest.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Manifest {
            format: FORMAT.into(),
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(config)?,
            artifacts: BTreeMap::new(),
        })
    }

    /// Hash `rel` under `out` and record it.
    pub fn record(&mut self, out: &Path, rel: &str) -> Result<()> {
        let path = out.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.artifacts.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let path = out.join(file_name(&self.command));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
        if m.format != FORMAT {
            return Err(Error::schema(path.display().to_string(), format!("unknown format {:?}", m.format)));
        }
        Ok(m)
    }

    /// Artifacts under `out` whose current hash differs from the recorded one.
    pub fn verify(&self, out: &Path) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for (rel, digest) in &self.artifacts {
            let path = out.join(rel);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != *digest {
                stale.push(rel.clone());
            }
        }
        Ok(stale)
    }
}
