//! Encoders, regressor heads and the batched forward/backward pass.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffl::{fold, Ffl, Polarity, UNSPECIFIED};
use crate::geometry::BBox;
use crate::lexicon::Lexicon;
use crate::model::config::{AblationMode, FcConfig, TextInput};
use crate::model::features::SparseFeatures;
use crate::model::loss::{bce, regression_grad, supcon, PROB_CLAMP};
use crate::model::nn::{dot, l2_normalize, l2_normalize_backward, relu, relu_backward, sigmoid, Table, Linear};
use crate::rng::Rng;

/// Token inventory of the text encoder: finding types, the two polarities,
/// canonical findings, regions and `unspecified`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocab {
    pub types: Vec<String>,
    pub findings: Vec<String>,
    pub regions: Vec<String>,
}

impl Vocab {
    pub fn from_lexicon(lex: &Lexicon) -> Self {
        Vocab {
            types: lex.finding_types(),
            findings: lex.findings().to_vec(),
            regions: lex.regions().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.types.len() + 2 + self.findings.len() + self.regions.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Token ids `[type, polarity, finding, anatomy]` of a canonical FFL.
    pub fn encode(&self, ffl: &Ffl, mode: TextInput) -> Result<[usize; 4]> {
        let find = |list: &[String], term: &str| {
            let term = fold(term);
            list.iter().position(|t| *t == term).ok_or(Error::UnknownTerm(term))
        };
        let ty = find(&self.types, &ffl.finding_type)?;
        let pol = self.types.len() + if ffl.polarity == Polarity::Yes { 0 } else { 1 };
        let base = self.types.len() + 2;
        let finding = base + find(&self.findings, &ffl.core_finding)?;
        let unspecified = base + self.findings.len() + self.regions.len();
        let anatomy = if mode == TextInput::Ffl3 || fold(&ffl.anatomy) == UNSPECIFIED {
            unspecified
        } else {
            base + self.findings.len() + find(&self.regions, &ffl.anatomy)?
        };
        Ok([ty, pol, finding, anatomy])
    }
}

/// Two linear layers with a ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    fn new(i: usize, h: usize, o: usize, r: &mut Rng) -> Self {
        Mlp { l1: Linear::new(i, h, r), l2: Linear::new(h, o, r) }
    }

    fn zeros(i: usize, h: usize, o: usize) -> Self {
        Mlp { l1: Linear::zeros(i, h), l2: Linear::zeros(h, o) }
    }
}

/// All trainable tensors.
///
/// The regressor is a list of heads whose outputs concatenate to the five values
/// `<x, y, w, h, E>`: one head in the combined modes, a box head and a veracity
/// head in the dual mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub image: Mlp,
    pub tokens: Table,
    pub text: Mlp,
    pub heads: Vec<Mlp>,
}

/// Sizes needed to build a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub features: usize,
    pub vocab: usize,
}

fn head_outputs(mode: AblationMode) -> &'static [usize] {
    match mode {
        AblationMode::Dual => &[4, 1],
        _ => &[5],
    }
}

impl Network {
    pub fn new(cfg: &FcConfig, dims: Dims, r: &mut Rng) -> Self {
        let d = cfg.d_joint;
        Network {
            image: Mlp::new(dims.features, cfg.image_hidden, d, r),
            tokens: Table::new(dims.vocab, cfg.token_dim, r),
            text: Mlp::new(4 * cfg.token_dim, cfg.text_hidden, d, r),
            heads: head_outputs(cfg.mode).iter().map(|&o| Mlp::new(2 * d, cfg.regressor_hidden, o, r)).collect(),
        }
    }

    pub fn zeros(cfg: &FcConfig, dims: Dims) -> Self {
        let d = cfg.d_joint;
        Network {
            image: Mlp::zeros(dims.features, cfg.image_hidden, d),
            tokens: Table::zeros(dims.vocab, cfg.token_dim),
            text: Mlp::zeros(4 * cfg.token_dim, cfg.text_hidden, d),
            heads: head_outputs(cfg.mode).iter().map(|&o| Mlp::zeros(2 * d, cfg.regressor_hidden, o)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mlp = |m: &Mlp| Mlp {
            l1: Linear::zeros(m.l1.inputs, m.l1.outputs),
            l2: Linear::zeros(m.l2.inputs, m.l2.outputs),
        };
        Network {
            image: mlp(&self.image),
            tokens: Table::zeros(self.tokens.rows, self.tokens.dim),
            text: mlp(&self.text),
            heads: self.heads.iter().map(mlp).collect(),
        }
    }

    /// Tensor names in the fixed order used by `tensors` and `tensors_mut`.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        let mlp = |prefix: &str, names: &mut Vec<String>| {
            for l in ["l1", "l2"] {
                for p in ["w", "b"] {
                    names.push(format!("{prefix}.{l}.{p}"));
                }
            }
        };
        mlp("image", &mut names);
        names.push("tokens".into());
        mlp("text", &mut names);
        for i in 0..self.heads.len() {
            mlp(&format!("head{i}"), &mut names);
        }
        names
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![&self.image.l1.w, &self.image.l1.b, &self.image.l2.w, &self.image.l2.b];
        out.push(&self.tokens.data);
        out.extend([&self.text.l1.w, &self.text.l1.b, &self.text.l2.w, &self.text.l2.b]);
        for h in &self.heads {
            out.extend([&h.l1.w, &h.l1.b, &h.l2.w, &h.l2.b]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![
            &mut self.image.l1.w,
            &mut self.image.l1.b,
            &mut self.image.l2.w,
            &mut self.image.l2.b,
        ];
        out.push(&mut self.tokens.data);
        out.extend([&mut self.text.l1.w, &mut self.text.l1.b, &mut self.text.l2.w, &mut self.text.l2.b]);
        for h in &mut self.heads {
            out.extend([&mut h.l1.w, &mut h.l1.b, &mut h.l2.w, &mut h.l2.b]);
        }
        out
    }

    /// Whether each tensor is updated under `mode`; the separate mode keeps the
    /// encoders at their initial values.
    pub fn trainable(&self, mode: AblationMode) -> Vec<bool> {
        self.tensor_names().iter().map(|n| mode != AblationMode::Sep || n.starts_with("head")).collect()
    }

    pub fn encode_image(&self, f: &SparseFeatures) -> Vec<f64> {
        self.image_pass(f).z
    }

    pub fn encode_tokens(&self, tokens: &[usize; 4]) -> Vec<f64> {
        self.text_pass(tokens).z
    }

    fn image_pass(&self, f: &SparseFeatures) -> EncoderPass {
        let pre = self.image.l1.forward_sparse(&f.index, &f.value);
        EncoderPass::finish(&self.image.l2, pre, Vec::new())
    }

    fn text_pass(&self, tokens: &[usize; 4]) -> EncoderPass {
        let input: Vec<f64> = tokens.iter().flat_map(|&t| self.tokens.row(t).iter().copied()).collect();
        let pre = self.text.l1.forward(&input);
        EncoderPass::finish(&self.text.l2, pre, input)
    }

    fn head_pass(&self, joint: Vec<f64>, p: f64, masks: &mut Option<&mut Rng>) -> Vec<HeadPass> {
        self.heads
            .iter()
            .map(|h| {
                let m0 = dropout_mask(joint.len(), p, masks);
                let x: Vec<f64> = joint.iter().zip(&m0).map(|(a, m)| a * m).collect();
                let pre = h.l1.forward(&x);
                let m1 = dropout_mask(pre.len(), p, masks);
                let a: Vec<f64> = relu(&pre).iter().zip(&m1).map(|(a, m)| a * m).collect();
                let out = h.l2.forward(&a);
                HeadPass { x, m0, pre, a, m1, out }
            })
            .collect()
    }

    /// Box and veracity probability for one image/finding pair, without dropout.
    pub fn predict(&self, z_image: &[f64], z_text: &[f64]) -> ([f64; 4], f64) {
        let joint: Vec<f64> = z_image.iter().chain(z_text).copied().collect();
        let logits: Vec<f64> = self.head_pass(joint, 0.0, &mut None).into_iter().flat_map(|h| h.out).collect();
        (std::array::from_fn(|k| sigmoid(logits[k])), sigmoid(logits[4]))
    }

    /// Total loss of a batch. Dropout masks are drawn from `dropout` when given;
    /// gradients are accumulated into `grad` when given.
    pub fn batch_loss(
        &self,
        cfg: &FcConfig,
        batch: &[&Prepared],
        mut dropout: Option<&mut Rng>,
        mut grad: Option<&mut Network>,
    ) -> BatchLoss {
        let images: Vec<EncoderPass> = batch.iter().map(|s| self.image_pass(&s.features)).collect();
        let mut owner = Vec::new();
        let mut texts = Vec::new();
        for (i, s) in batch.iter().enumerate() {
            for rec in &s.records {
                owner.push(i);
                texts.push(self.text_pass(&rec.tokens));
            }
        }
        let records: Vec<&Record> = batch.iter().flat_map(|s| s.records.iter()).collect();
        let n_rec = records.len();
        let mut dz_img: Vec<Vec<f64>> = images.iter().map(|e| vec![0.0; e.z.len()]).collect();
        let mut dz_txt: Vec<Vec<f64>> = texts.iter().map(|e| vec![0.0; e.z.len()]).collect();
        let mut out = BatchLoss::default();

        let add_sim_grad = |i: usize, j: usize, ds: f64, dz_img: &mut [Vec<f64>], dz_txt: &mut [Vec<f64>]| {
            for (d, t) in dz_img[i].iter_mut().zip(&texts[j].z) {
                *d += ds * t;
            }
            for (d, v) in dz_txt[j].iter_mut().zip(&images[i].z) {
                *d += ds * v;
            }
        };

        match cfg.mode {
            AblationMode::Comb | AblationMode::Dual => {
                let mut terms = Vec::new();
                for (i, image) in images.iter().enumerate().take(batch.len()) {
                    let reals: Vec<usize> = (0..n_rec).filter(|&j| owner[j] == i && records[j].real).collect();
                    let own_reals: Vec<&Record> = reals.iter().map(|&j| records[j]).collect();
                    let fakes: Vec<usize> = (0..n_rec)
                        .filter(|&j| !records[j].real)
                        .filter(|&j| {
                            owner[j] == i || (cfg.cross_sample_negatives && false_for(records[j], &own_reals))
                        })
                        .collect();
                    let sim = |js: &[usize]| -> Vec<f64> { js.iter().map(|&j| dot(&image.z, &texts[j].z)).collect() };
                    match supcon(&sim(&reals), &sim(&fakes), cfg.temperature, cfg.incl_positive_denominator) {
                        Some(s) => terms.push((i, reals, fakes, s)),
                        None => out.skipped += 1,
                    }
                }
                if !terms.is_empty() {
                    let scale = 1.0 / terms.len() as f64;
                    out.contrastive = terms.iter().map(|t| t.3.loss).sum::<f64>() * scale;
                    let w = cfg.contrastive_weight * scale;
                    for (i, reals, fakes, s) in &terms {
                        for (&j, d) in reals.iter().zip(&s.d_real).chain(fakes.iter().zip(&s.d_fake)) {
                            add_sim_grad(*i, j, w * d, &mut dz_img, &mut dz_txt);
                        }
                    }
                }
            }
            AblationMode::Bce => {
                let scale = 1.0 / n_rec.max(1) as f64;
                for j in 0..n_rec {
                    let i = owner[j];
                    let q = sigmoid(dot(&images[i].z, &texts[j].z) / cfg.temperature);
                    let (l, dq) = bce(q, records[j].e);
                    out.contrastive += l * scale;
                    let ds = cfg.contrastive_weight * scale * dq * q * (1.0 - q) / cfg.temperature;
                    add_sim_grad(i, j, ds, &mut dz_img, &mut dz_txt);
                }
            }
            AblationMode::Sep => {}
        }

        let scale = 1.0 / n_rec.max(1) as f64;
        for j in 0..n_rec {
            let i = owner[j];
            let rec = records[j];
            let joint: Vec<f64> = images[i].z.iter().chain(&texts[j].z).copied().collect();
            let heads = self.head_pass(joint, cfg.dropout, &mut dropout);
            let logits: Vec<f64> = heads.iter().flat_map(|h| h.out.iter().copied()).collect();
            let pb: [f64; 4] = std::array::from_fn(|k| sigmoid(logits[k]));
            let pe = sigmoid(logits[4]);
            let (loss, d_box, d_prob) = regression_grad(&pb, pe, &rec.target, rec.e, &cfg.loss_weights, cfg.giou);
            out.regression += loss * scale;
            let Some(g) = grad.as_deref_mut() else { continue };
            let mut d_logits: Vec<f64> = (0..4).map(|k| scale * d_box[k] * pb[k] * (1.0 - pb[k])).collect();
            // BCE through the sigmoid is `p - e`, except where the clamp flattens it
            let clamped = pe.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP) != pe;
            let d_e = if clamped || d_prob == 0.0 { 0.0 } else { cfg.loss_weights.bce * (pe - rec.e) };
            d_logits.push(scale * d_e);
            let mut d_joint = vec![0.0; 2 * cfg.d_joint];
            let mut offset = 0;
            for ((h, pass), gh) in self.heads.iter().zip(&heads).zip(g.heads.iter_mut()) {
                let dy = &d_logits[offset..offset + h.l2.outputs];
                offset += h.l2.outputs;
                let da = h.l2.backward(&pass.a, dy, &mut gh.l2);
                let da: Vec<f64> = da.iter().zip(&pass.m1).map(|(d, m)| d * m).collect();
                let dpre = relu_backward(&pass.pre, &da);
                let dx = h.l1.backward(&pass.x, &dpre, &mut gh.l1);
                for ((dj, d), m) in d_joint.iter_mut().zip(&dx).zip(&pass.m0) {
                    *dj += d * m;
                }
            }
            let d = cfg.d_joint;
            for (a, b) in dz_img[i].iter_mut().zip(&d_joint[..d]) {
                *a += b;
            }
            for (a, b) in dz_txt[j].iter_mut().zip(&d_joint[d..]) {
                *a += b;
            }
        }

        out.total = match cfg.mode {
            AblationMode::Sep => out.regression,
            _ => cfg.contrastive_weight * out.contrastive + out.regression,
        };

        if let Some(g) = grad {
            if cfg.mode != AblationMode::Sep {
                for (i, s) in batch.iter().enumerate() {
                    let dpre = images[i].backward(&self.image.l2, &dz_img[i], &mut g.image.l2);
                    self.image.l1.backward_sparse(&s.features.index, &s.features.value, &dpre, &mut g.image.l1);
                }
                for (j, rec) in records.iter().enumerate() {
                    let dpre = texts[j].backward(&self.text.l2, &dz_txt[j], &mut g.text.l2);
                    let dinput = self.text.l1.backward(&texts[j].input, &dpre, &mut g.text.l1);
                    for (slot, &t) in rec.tokens.iter().enumerate() {
                        let dim = self.tokens.dim;
                        g.tokens.accumulate(t, &dinput[slot * dim..(slot + 1) * dim]);
                    }
                }
            }
        }
        out
    }
}

fn dropout_mask(n: usize, p: f64, r: &mut Option<&mut Rng>) -> Vec<f64> {
    match r {
        Some(r) if p > 0.0 => {
            (0..n).map(|_| if r.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) }).collect()
        }
        _ => vec![1.0; n],
    }
}

/// Forward state of an encoder: `z = normalize(W2 relu(W1 x + b1) + b2)`.
struct EncoderPass {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    z: Vec<f64>,
    norm: f64,
}

impl EncoderPass {
    fn finish(l2: &Linear, pre: Vec<f64>, input: Vec<f64>) -> Self {
        let hidden = relu(&pre);
        let (z, norm) = l2_normalize(&l2.forward(&hidden));
        EncoderPass { input, pre, hidden, z, norm }
    }

    /// Backward to the first layer's pre-activation gradient.
    fn backward(&self, l2: &Linear, dz: &[f64], g2: &mut Linear) -> Vec<f64> {
        let du = l2_normalize_backward(&self.z, self.norm, dz);
        let dh = l2.backward(&self.hidden, &du, g2);
        relu_backward(&self.pre, &dh)
    }
}

struct HeadPass {
    x: Vec<f64>,
    m0: Vec<f64>,
    pre: Vec<f64>,
    a: Vec<f64>,
    m1: Vec<f64>,
    out: Vec<f64>,
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    /// Contrastive loss (similarity BCE in the BCE mode, zero in the separate mode).
    pub contrastive: f64,
    pub regression: f64,
    /// Samples left out of the contrastive loss for lack of reals or fakes.
    pub skipped: usize,
}

/// Training record in network-ready form.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub tokens: [usize; 4],
    pub target: BBox,
    pub e: f64,
    pub real: bool,
    /// Polarity of the claim.
    pub positive: bool,
}

impl Record {
    fn same_place(&self, other: &Record) -> bool {
        self.tokens[0] == other.tokens[0] && self.tokens[2] == other.tokens[2] && self.tokens[3] == other.tokens[3]
    }
}

/// Whether `claim`, taken from another study, is false for a study whose real
/// findings are `reals`. Real positives are read as the complete list of what
/// the image shows.
fn false_for(claim: &Record, reals: &[&Record]) -> bool {
    let shown = reals.iter().any(|k| k.positive && k.same_place(claim));
    if claim.positive {
        !shown
    } else {
        shown
    }
}

/// Sample in network-ready form.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub features: SparseFeatures,
    pub records: Vec<Record>,
}
