//! Finite-difference check of the analytic gradients of the total loss.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::model::config::FcConfig;
use crate::model::features::SparseFeatures;
use crate::model::network::{Dims, Network, Prepared, Record};
use crate::rng::{self, Rng};

/// Central-difference step.
pub const STEP: f64 = 1e-5;

/// Gradient magnitudes below this are compared on an absolute scale; round-off
/// in the difference quotient is about `1e-16 / STEP` times the loss.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Parameter with the largest relative error, as `tensor[index]`.
    pub worst: String,
    pub checked: usize,
    /// Largest analytic gradient magnitude seen.
    pub max_grad: f64,
}

/// Tiny model of the same architecture and mode as `config`.
pub fn tiny_config(config: &FcConfig) -> FcConfig {
    FcConfig {
        d_joint: config.d_joint.min(6),
        image_hidden: 7,
        token_dim: 3,
        text_hidden: 7,
        regressor_hidden: 9,
        ..config.clone()
    }
}

fn random_box(r: &mut Rng) -> BBox {
    let (w, h) = (r.random_range(0.1..0.4), r.random_range(0.1..0.4));
    BBox::new(r.random_range(0.0..1.0 - w), r.random_range(0.0..1.0 - h), w, h).expect("box inside frame")
}

/// Two samples: one real with two fakes, two reals with two fakes. Fakes carry
/// zero boxes or relocated boxes like the synthetic corpus.
fn tiny_batch(dims: Dims, r: &mut Rng) -> Vec<Prepared> {
    let token = |r: &mut Rng| -> [usize; 4] { std::array::from_fn(|_| r.random_range(0..dims.vocab)) };
    let sample = |reals: usize, fakes: usize, r: &mut Rng| {
        let mut index: Vec<usize> = (0..dims.features).filter(|_| r.random_bool(0.5)).collect();
        if index.is_empty() {
            index.push(0);
        }
        let value = index.iter().map(|_| r.random_range(0.1..1.0)).collect();
        let mut records = Vec::new();
        for _ in 0..reals {
            records.push(Record { tokens: token(r), target: random_box(r), e: 1.0, real: true, positive: true });
        }
        for k in 0..fakes {
            let target = if k % 2 == 0 { BBox::ZERO } else { random_box(r) };
            records.push(Record { tokens: token(r), target, e: 0.0, real: false, positive: k % 2 == 1 });
        }
        Prepared { features: SparseFeatures { index, value }, records }
    };
    vec![sample(1, 2, r), sample(2, 2, r)]
}

/// Compare analytic gradients with central differences on a tiny random model.
///
/// Dropout masks are redrawn from the same stream for every evaluation, so the
/// loss is a fixed smooth function of the parameters away from ReLU and L1 kinks.
pub fn grad_check(config: &FcConfig, seed: u64) -> GradCheckReport {
    let cfg = tiny_config(config);
    let dims = Dims { features: 10, vocab: 9 };
    let mut r = rng::stream(rng::derive(seed, "gradcheck"), 0);
    let net = Network::new(&cfg, dims, &mut r);
    let batch_owned = tiny_batch(dims, &mut r);
    let batch: Vec<&Prepared> = batch_owned.iter().collect();
    let mask_seed = rng::derive(seed, "gradcheck-masks");
    let loss = |n: &Network| n.batch_loss(&cfg, &batch, Some(&mut rng::stream(mask_seed, 0)), None).total;

    let mut grad = net.zeros_like();
    net.batch_loss(&cfg, &batch, Some(&mut rng::stream(mask_seed, 0)), Some(&mut grad));

    let names = net.tensor_names();
    let trainable = net.trainable(cfg.mode);
    let mut report =
        GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, worst: String::new(), checked: 0, max_grad: 0.0 };
    let mut probe = net.clone();
    for (t, name) in names.iter().enumerate() {
        if !trainable[t] {
            continue;
        }
        for i in 0..net.tensors()[t].len() {
            let analytic = grad.tensors()[t][i];
            let orig = net.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + STEP;
            let up = loss(&probe);
            probe.tensors_mut()[t][i] = orig - STEP;
            let down = loss(&probe);
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let abs = (analytic - numeric).abs();
            let rel = abs / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
            report.checked += 1;
            report.max_grad = report.max_grad.max(analytic.abs());
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{name}[{i}]");
            }
        }
    }
    report
}
