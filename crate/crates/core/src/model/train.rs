//! Optimizer, learning-rate schedule and the training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{GroundedFinding, Sample};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::model::checkpoint::Checkpoint;
use crate::model::config::FcConfig;
use crate::model::network::{Network, Prepared};
use crate::model::FcModel;
use crate::rng;
use crate::scoring::evaluate_model;
use crate::toyworld::ToyImage;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// An image paired with its sample.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub image: &'a ToyImage,
    pub sample: &'a Sample,
}

/// Linear warmup to `lr_max`, then cosine annealing to zero at `total` steps.
pub fn learning_rate(step: usize, total: usize, warmup: usize, lr_max: f64) -> f64 {
    if step < warmup {
        return lr_max * (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1);
    let t = ((step - warmup) as f64 / span as f64).min(1.0);
    0.5 * lr_max * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    decay: Vec<bool>,
    trainable: Vec<bool>,
}

impl AdamW {
    /// Weight decay applies to weight matrices and token tables, not to biases.
    pub fn new(net: &Network, trainable: Vec<bool>) -> Self {
        let shapes = net.tensors();
        AdamW {
            m: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            t: 0,
            decay: net.tensor_names().iter().map(|n| !n.ends_with(".b")).collect(),
            trainable,
        }
    }

    pub fn step(&mut self, net: &mut Network, grad: &Network, lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (k, (p, g)) in net.tensors_mut().into_iter().zip(grad.tensors()).enumerate() {
            if !self.trainable[k] {
                continue;
            }
            let wd = if self.decay[k] { weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                p[i] -= lr * (update + wd * p[i]);
            }
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub supcon_loss: f64,
    pub reg_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_miou: Option<f64>,
}

fn resolved(lexicon: &Lexicon, s: &Sample) -> Result<Sample> {
    let fix = |fs: &[GroundedFinding]| -> Result<Vec<GroundedFinding>> {
        fs.iter().map(|g| Ok(GroundedFinding { ffl: lexicon.resolve(&g.ffl)?, ..g.clone() })).collect()
    };
    Ok(Sample { findings_real: fix(&s.findings_real)?, findings_fake: fix(&s.findings_fake)?, ..s.clone() })
}

/// Train a fresh model end to end. `on_epoch` sees each epoch's metrics as they
/// are produced.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    lexicon: &Lexicon,
    config: &FcConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Checkpoint> {
    config.validate()?;
    let first = train_set.first().ok_or_else(|| Error::Config("empty training corpus".into()))?;
    let mut model = FcModel::for_toy(config.clone(), lexicon, first.image.width, first.image.height, seed)?;

    let prepared: Vec<Prepared> = train_set
        .iter()
        .map(|ex| model.prepare(ex.image, &resolved(lexicon, ex.sample)?))
        .collect::<Result<_>>()?;
    let val_samples: Vec<Sample> = val_set.iter().map(|ex| resolved(lexicon, ex.sample)).collect::<Result<_>>()?;
    let val: Vec<Example> =
        val_set.iter().zip(&val_samples).map(|(ex, s)| Example { image: ex.image, sample: s }).collect();

    let batches_per_epoch = prepared.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let mut opt = AdamW::new(&model.net, model.net.trainable(config.mode));
    let order_seed = rng::derive(seed, "order");
    let dropout_seed = rng::derive(seed, "dropout");
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut step = 0;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        order.shuffle(&mut rng::stream(order_seed, epoch as u64));
        let mut drop_rng = rng::stream(dropout_seed, epoch as u64);
        let (mut con_sum, mut reg_sum) = (0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
            let mut grad = model.net.zeros_like();
            let loss = model.net.batch_loss(config, &batch, Some(&mut drop_rng), Some(&mut grad));
            if !loss.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    supcon: loss.contrastive,
                    reg: loss.regression,
                });
            }
            let lr = learning_rate(step, total_steps, config.warmup_steps, config.lr_max);
            opt.step(&mut model.net, &grad, lr, config.weight_decay);
            con_sum += loss.contrastive;
            reg_sum += loss.regression;
            step += 1;
        }
        let (val_accuracy, val_miou) = if val.is_empty() {
            (None, None)
        } else {
            let m = evaluate_model(&model, &val)?;
            (Some(m.accuracy), Some(m.miou))
        };
        let m = EpochMetrics {
            epoch,
            supcon_loss: con_sum / batches_per_epoch as f64,
            reg_loss: reg_sum / batches_per_epoch as f64,
            val_accuracy,
            val_miou,
        };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(Checkpoint { model, seed, metrics })
}
