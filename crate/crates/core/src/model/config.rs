use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GiouConvention;

/// Training configuration of the four compared model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AblationMode {
    /// Contrastive head plus one combined regressor, trained end to end.
    #[default]
    #[serde(rename = "FCRegComb")]
    Comb,
    /// Binary cross-entropy on the embedding similarity instead of the contrastive loss.
    #[serde(rename = "FCRegBCE")]
    Bce,
    /// Encoders frozen at initialization; only the regressor learns.
    #[serde(rename = "FCRegSep")]
    Sep,
    /// Separate box and veracity regressor heads.
    #[serde(rename = "FCRegDual")]
    Dual,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] =
        [AblationMode::Comb, AblationMode::Bce, AblationMode::Sep, AblationMode::Dual];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Comb => "FCRegComb",
            AblationMode::Bce => "FCRegBCE",
            AblationMode::Sep => "FCRegSep",
            AblationMode::Dual => "FCRegDual",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown ablation mode {s:?}")))
    }
}

/// Which FFL fields feed the text encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextInput {
    /// Type, polarity and finding; anatomy is replaced by the `unspecified` token.
    Ffl3,
    #[default]
    Ffl4,
}

impl FromStr for TextInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ffl3" => Ok(TextInput::Ffl3),
            "ffl4" => Ok(TextInput::Ffl4),
            _ => Err(Error::Config(format!("unknown text input mode {s:?}"))),
        }
    }
}

/// Regression target box of fake findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FakeBoxTarget {
    /// The box stored with the record: zero for reversals, the moved location otherwise.
    #[default]
    Stored,
    /// The zero box for every fake.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub l1: f64,
    pub giou: f64,
    pub mse: f64,
    pub bce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { l1: 1.0, giou: 1.0, mse: 1.0, bce: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcConfig {
    pub mode: AblationMode,
    /// Contrastive temperature.
    pub temperature: f64,
    pub d_joint: usize,
    /// Side of the patch grid used by the image feature extractor.
    pub feature_grid: usize,
    pub image_hidden: usize,
    pub token_dim: usize,
    pub text_hidden: usize,
    pub regressor_hidden: usize,
    pub dropout: f64,
    pub loss_weights: LossWeights,
    /// Weight of the contrastive (or similarity-BCE) head in the total loss.
    pub contrastive_weight: f64,
    pub lr_max: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub giou: GiouConvention,
    pub text_input: TextInput,
    /// Add the positive term to the contrastive denominator (InfoNCE form).
    pub incl_positive_denominator: bool,
    /// Use fakes of the other samples in the batch as extra negatives when the
    /// sample's own findings show them false.
    pub cross_sample_negatives: bool,
    pub fake_box_target: FakeBoxTarget,
}

impl Default for FcConfig {
    fn default() -> Self {
        FcConfig {
            mode: AblationMode::Comb,
            temperature: 0.07,
            d_joint: 64,
            feature_grid: 16,
            image_hidden: 128,
            token_dim: 16,
            text_hidden: 128,
            regressor_hidden: 256,
            dropout: 0.1,
            loss_weights: LossWeights::default(),
            contrastive_weight: 1.0,
            lr_max: 3e-3,
            warmup_steps: 50,
            weight_decay: 0.01,
            epochs: 100,
            batch_size: 32,
            giou: GiouConvention::Standard,
            text_input: TextInput::Ffl4,
            incl_positive_denominator: false,
            cross_sample_negatives: true,
            fake_box_target: FakeBoxTarget::Stored,
        }
    }
}

impl FcConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.loss_weights;
        let checks = [
            (self.temperature > 0.0 && self.temperature.is_finite(), "temperature must be positive"),
            (
                [w.l1, w.giou, w.mse, w.bce, self.contrastive_weight].iter().all(|v| *v >= 0.0 && v.is_finite()),
                "loss weights must be non-negative",
            ),
            (self.batch_size >= 2, "batch size must be at least 2"),
            (
                self.d_joint > 0
                    && self.feature_grid > 0
                    && self.image_hidden > 0
                    && self.token_dim > 0
                    && self.text_hidden > 0
                    && self.regressor_hidden > 0,
                "layer widths must be positive",
            ),
            ((0.0..1.0).contains(&self.dropout), "dropout must lie in [0, 1)"),
            (self.lr_max > 0.0 && self.lr_max.is_finite(), "lr_max must be positive"),
            (self.weight_decay >= 0.0, "weight decay must be non-negative"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config(msg.to_string())),
            None => Ok(()),
        }
    }
}
