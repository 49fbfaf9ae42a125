//! Self-describing checkpoint files.
//!
//! Parameters are stored as base64 of little-endian `f64`, so a load restores the
//! exact bits that were saved.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::FcConfig;
use crate::model::features::FeatureSpec;
use crate::model::network::{Dims, Network, Vocab};
use crate::model::train::EpochMetrics;
use crate::model::FcModel;

pub const FORMAT: &str = "factcheck-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: FcModel,
    pub seed: u64,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Blob {
    name: String,
    len: usize,
    data: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    seed: u64,
    config: FcConfig,
    vocab: Vocab,
    features: FeatureSpec,
    metrics: Vec<EpochMetrics>,
    params: Vec<Blob>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(name: &str, data: &str, len: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(data).map_err(|e| Error::schema(name, e.to_string()))?;
    if bytes.len() != len * 8 {
        return Err(Error::ShapeMismatch {
            expected: format!("{name}: {len} values"),
            actual: format!("{} bytes", bytes.len()),
        });
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let net = &self.model.net;
        let params = net
            .tensor_names()
            .into_iter()
            .zip(net.tensors())
            .map(|(name, t)| Blob { name, len: t.len(), data: encode(t) })
            .collect();
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            seed: self.seed,
            config: self.model.config.clone(),
            vocab: self.model.vocab.clone(),
            features: self.model.features.clone(),
            metrics: self.metrics.clone(),
            params,
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::schema("checkpoint", e.to_string()))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::schema(
                "checkpoint",
                format!("unsupported format {} v{}", file.format, file.version),
            ));
        }
        file.config.validate()?;
        let dims = Dims { features: file.features.dim(), vocab: file.vocab.len() };
        let mut net = Network::zeros(&file.config, dims);
        let names = net.tensor_names();
        if names.len() != file.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} tensors", names.len()),
                actual: format!("{} tensors", file.params.len()),
            });
        }
        for ((name, slot), blob) in names.iter().zip(net.tensors_mut()).zip(&file.params) {
            if *name != blob.name || slot.len() != blob.len {
                return Err(Error::ShapeMismatch {
                    expected: format!("{name}[{}]", slot.len()),
                    actual: format!("{}[{}]", blob.name, blob.len),
                });
            }
            *slot = decode(name, &blob.data, blob.len)?;
        }
        Ok(Checkpoint {
            model: FcModel { config: file.config, vocab: file.vocab, features: file.features, net },
            seed: file.seed,
            metrics: file.metrics,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
