//! The fact-checking network: image and finding encoders projected into a joint
//! space, a contrastive head over image/finding similarities and a regressor that
//! predicts each finding's box and veracity from the concatenated embeddings.

pub mod checkpoint;
pub mod config;
pub mod features;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod nn;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::Result;
use crate::ffl::Ffl;
use crate::geometry::BBox;
use crate::lexicon::Lexicon;
use crate::rng;
use crate::toyworld::ToyImage;

pub use checkpoint::Checkpoint;
pub use config::{AblationMode, FakeBoxTarget, FcConfig, LossWeights, TextInput};
pub use features::{FeatureSpec, SparseFeatures};
pub use gradcheck::{grad_check, GradCheckReport};
pub use network::{Network, Vocab};
pub use train::{train, EpochMetrics, Example};

/// Output of an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub normalized: bool,
}

impl Embedding {
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let d = nn::dot(&self.vector, &other.vector);
        let n = (nn::dot(&self.vector, &self.vector) * nn::dot(&other.vector, &other.vector)).sqrt();
        if n == 0.0 {
            0.0
        } else {
            d / n
        }
    }
}

/// Predicted `<x, y, w, h>` and veracity probability, all strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub veracity_prob: f64,
}

impl Prediction {
    /// Veracity decision at threshold 0.5.
    pub fn is_real(&self) -> bool {
        self.veracity_prob >= 0.5
    }

    /// The predicted box clipped into the frame.
    pub fn to_box(&self) -> BBox {
        let [x, y, w, h] = self.bbox;
        BBox::clamped(x, y, w, h)
    }
}

/// A network together with everything needed to feed it.
#[derive(Debug, Clone, PartialEq)]
pub struct FcModel {
    pub config: FcConfig,
    pub vocab: Vocab,
    pub features: FeatureSpec,
    pub net: Network,
}

impl FcModel {
    /// Fresh model with parameters drawn from `seed`.
    pub fn new(config: FcConfig, vocab: Vocab, features: FeatureSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let dims = network::Dims { features: features.dim(), vocab: vocab.len() };
        let net = Network::new(&config, dims, &mut rng::stream(rng::derive(seed, "init"), 0));
        Ok(FcModel { config, vocab, features, net })
    }

    /// Fresh model for toy images of the given size over the lexicon's vocabulary.
    pub fn for_toy(config: FcConfig, lexicon: &Lexicon, width: usize, height: usize, seed: u64) -> Result<Self> {
        let features = FeatureSpec::toy(width, height, config.feature_grid, lexicon.findings().len());
        FcModel::new(config, Vocab::from_lexicon(lexicon), features, seed)
    }

    pub fn encode_image(&self, img: &ToyImage) -> Result<Embedding> {
        let f = self.features.extract(img)?;
        Ok(Embedding { vector: self.net.encode_image(&f), normalized: true })
    }

    pub fn encode_ffl(&self, ffl: &Ffl) -> Result<Embedding> {
        let tokens = self.vocab.encode(ffl, self.config.text_input)?;
        Ok(Embedding { vector: self.net.encode_tokens(&tokens), normalized: true })
    }

    /// One prediction per FFL. An image of the wrong size fails as a whole; an
    /// FFL outside the vocabulary fails only its own entry.
    pub fn predict(&self, img: &ToyImage, ffls: &[Ffl]) -> Result<Vec<Result<Prediction>>> {
        let zi = self.encode_image(img)?;
        Ok(ffls
            .iter()
            .map(|f| {
                let zf = self.encode_ffl(f)?;
                let (bbox, veracity_prob) = self.net.predict(&zi.vector, &zf.vector);
                Ok(Prediction { bbox, veracity_prob })
            })
            .collect())
    }

    /// Network-ready form of a sample; FFLs must already be canonical.
    pub fn prepare(&self, img: &ToyImage, sample: &Sample) -> Result<network::Prepared> {
        let features = self.features.extract(img)?;
        let records = sample
            .findings()
            .map(|g| {
                Ok(network::Record {
                    tokens: self.vocab.encode(&g.ffl, self.config.text_input)?,
                    target: match (g.is_real(), self.config.fake_box_target) {
                        (false, FakeBoxTarget::Zero) => BBox::ZERO,
                        _ => g.bbox,
                    },
                    e: g.e as f64,
                    real: g.is_real(),
                    positive: g.ffl.polarity == crate::ffl::Polarity::Yes,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(network::Prepared { features, records })
    }
}
