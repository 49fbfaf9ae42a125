//! Resolved run configurations. Each command serializes its config into the
//! manifest next to its outputs; feeding that manifest back through `--config`
//! reruns the command with the same parameters.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::model::{AblationMode, FcConfig};
use crate::perturb::PerturbConfig;
use crate::scoring::{default_profiles, ErrorProfile, GoldMatch, RqConvention};
use crate::toyworld::ToyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenGoldConfig {
    pub n: usize,
    pub seed: u64,
    pub lexicon: Option<PathBuf>,
    pub world: ToyConfig,
}

impl Default for GenGoldConfig {
    fn default() -> Self {
        GenGoldConfig { n: 500, seed: 7, lexicon: None, world: ToyConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSynthConfig {
    pub gold: PathBuf,
    pub seed: u64,
    pub lexicon: Option<PathBuf>,
    pub perturb: PerturbConfig,
}

impl Default for GenSynthConfig {
    fn default() -> Self {
        GenSynthConfig { gold: "gold.jsonl".into(), seed: 7, lexicon: None, perturb: PerturbConfig::default() }
    }
}

/// Corpus location shared by the commands that read images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub corpus: PathBuf,
    /// Directory that `image_ref` paths are relative to; the corpus directory when unset.
    pub images: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { corpus: "synth.jsonl".into(), images: None, lexicon: None }
    }
}

impl DataConfig {
    pub fn image_dir(&self) -> PathBuf {
        match &self.images {
            Some(d) => d.clone(),
            None => self.corpus.parent().map(Path::to_path_buf).unwrap_or_default(),
        }
    }
}

/// Which 70-10-20 partition to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: u64,
    pub fold: usize,
    pub folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { seed: 7, fold: 0, folds: 3 }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 || self.fold >= self.folds {
            return Err(Error::Config(format!("fold {} outside 0..{}", self.fold, self.folds)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub seed: u64,
    pub model: FcConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { data: DataConfig::default(), split: SplitConfig::default(), seed: 7, model: FcConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub checkpoint: PathBuf,
    pub data: DataConfig,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig { checkpoint: "checkpoint.json".into(), data: DataConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessConfig {
    pub checkpoint: PathBuf,
    pub reports: PathBuf,
    pub images: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Gold samples; adds `RQ(A, G)` and ground-truth boxes to the outputs.
    pub gold: Option<PathBuf>,
    pub convention: RqConvention,
    pub matching: GoldMatch,
    pub overlays: bool,
}

impl Default for AssessConfig {
    fn default() -> Self {
        AssessConfig {
            checkpoint: "checkpoint.json".into(),
            reports: "reports.jsonl".into(),
            images: None,
            lexicon: None,
            gold: None,
            convention: RqConvention::Default,
            matching: GoldMatch::Pair,
            overlays: true,
        }
    }
}

impl AssessConfig {
    pub fn image_dir(&self) -> PathBuf {
        match &self.images {
            Some(d) => d.clone(),
            None => self.reports.parent().map(Path::to_path_buf).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub checkpoint: PathBuf,
    pub data: DataConfig,
    /// Split file written by `train`; the whole corpus is evaluated when unset.
    pub split: Option<PathBuf>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { checkpoint: "checkpoint.json".into(), data: DataConfig::default(), split: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcordanceConfig {
    pub checkpoint: PathBuf,
    pub data: DataConfig,
    pub split: Option<PathBuf>,
    pub seed: u64,
    pub convention: RqConvention,
    pub matching: GoldMatch,
    pub overlap_threshold: f64,
    pub profiles: Vec<ErrorProfile>,
}

impl Default for ConcordanceConfig {
    fn default() -> Self {
        ConcordanceConfig {
            checkpoint: "checkpoint.json".into(),
            data: DataConfig::default(),
            split: None,
            seed: 7,
            convention: RqConvention::Default,
            matching: GoldMatch::Pair,
            overlap_threshold: PerturbConfig::default().overlap_threshold,
            profiles: default_profiles(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub seed: u64,
    /// Shared settings; `mode` is replaced by each entry of `modes`.
    pub model: FcConfig,
    pub modes: Vec<AblationMode>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            data: DataConfig::default(),
            split: SplitConfig::default(),
            seed: 7,
            model: FcConfig::default(),
            modes: AblationMode::ALL.to_vec(),
        }
    }
}

/// The built-in lexicon, or the one at `path`.
pub fn load_lexicon(path: Option<&Path>) -> Result<Lexicon> {
    match path {
        Some(p) => Lexicon::load(p),
        None => Ok(Lexicon::default()),
    }
}

/// Read a config file. A manifest written by an earlier run is accepted too, as
/// long as it was written by the same command.
pub fn read_config<T: DeserializeOwned>(path: &Path, command: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let value = match value.get("format").and_then(|f| f.as_str()) {
        Some(super::manifest::FORMAT) => {
            let written_by = value.get("command").and_then(|c| c.as_str()).unwrap_or_default();
            if written_by != command {
                return Err(Error::Config(format!(
                    "{} was written by {written_by:?}, not {command:?}",
                    path.display()
                )));
            }
            value.get("config").cloned().unwrap_or_default()
        }
        _ => value,
    };
    serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let c = TrainConfig::default();
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let c = ConcordanceConfig::default();
        assert_eq!(c.profiles.len(), 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<GenGoldConfig>(r#"{"n": 3, "sed": 1}"#);
        assert!(err.is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"model": {"epochs": 2}}"#).unwrap();
        assert_eq!((c.model.epochs, c.split.folds), (2, 3));
    }

    #[test]
    fn split_fold_bounds() {
        assert!(SplitConfig { fold: 3, ..SplitConfig::default() }.validate().is_err());
        assert!(SplitConfig { folds: 0, fold: 0, seed: 1 }.validate().is_err());
        assert!(SplitConfig::default().validate().is_ok());
    }
}
