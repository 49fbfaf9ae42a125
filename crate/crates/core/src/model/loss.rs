//! Contrastive and regression losses with gradients.

use crate::geometry::{giou_with, BBox, GiouConvention, EPS};
use crate::model::config::LossWeights;

/// Probability clamp used by every binary cross-entropy term.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Supcon {
    pub loss: f64,
    /// `dL/ds` for each real similarity.
    pub d_real: Vec<f64>,
    /// `dL/ds` for each negative similarity.
    pub d_fake: Vec<f64>,
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Supervised contrastive loss of one image against its real and fake findings.
///
/// Each real term is `-(s_r/τ - log Σ_fakes e^{s_n/τ})`, averaged over reals. The
/// denominator holds fakes only unless `incl_positive` is set, so the value can be
/// negative. Returns `None` when either list is empty.
pub fn supcon(s_real: &[f64], s_fake: &[f64], tau: f64, incl_positive: bool) -> Option<Supcon> {
    if s_real.is_empty() || s_fake.is_empty() {
        return None;
    }
    let lse_fake = log_sum_exp(s_fake.iter().map(|s| s / tau));
    let scale = 1.0 / s_real.len() as f64;
    let mut loss = 0.0;
    let mut d_real = vec![0.0; s_real.len()];
    let mut d_fake = vec![0.0; s_fake.len()];
    for (r, &sr) in s_real.iter().enumerate() {
        let pos = sr / tau;
        let log_den = if incl_positive {
            let m = lse_fake.max(pos);
            m + ((lse_fake - m).exp() + (pos - m).exp()).ln()
        } else {
            lse_fake
        };
        loss += log_den - pos;
        d_real[r] = -scale / tau;
        if incl_positive {
            d_real[r] += scale / tau * (pos - log_den).exp();
        }
        for (d, sn) in d_fake.iter_mut().zip(s_fake) {
            *d += scale / tau * (sn / tau - log_den).exp();
        }
    }
    Some(Supcon { loss: loss * scale, d_real, d_fake })
}

/// Binary cross-entropy of probability `p` against label `y`, and `dL/dp`.
/// The gradient vanishes where the clamp is active.
pub fn bce(p: f64, y: f64) -> (f64, f64) {
    let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let loss = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
    let grad = if q != p { 0.0 } else { -y / q + (1.0 - y) / (1.0 - q) };
    (loss, grad)
}

/// Per-term values of the regression loss (before weighting).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionTerms {
    pub l1: f64,
    /// `1 - giou` under the standard convention, the printed expression otherwise.
    pub giou: f64,
    pub mse: f64,
    pub bce: f64,
}

impl RegressionTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.l1 * self.l1 + w.giou * self.giou + w.mse * self.mse + w.bce * self.bce
    }
}

/// Raw box `[x, y, w, h]` without validity requirements.
fn raw_box(b: &[f64; 4]) -> BBox {
    BBox { x: b[0], y: b[1], w: b[2], h: b[3] }
}

pub fn regression_terms(
    pred: &[f64; 4],
    prob: f64,
    target: &BBox,
    e: f64,
    convention: GiouConvention,
) -> RegressionTerms {
    let t = target.as_array();
    let l1 = pred.iter().zip(&t).map(|(p, g)| (p - g).abs()).sum();
    let mse = pred.iter().zip(&t).map(|(p, g)| (p - g) * (p - g)).sum();
    let g = giou_with(convention, &raw_box(pred), target);
    let giou = match convention {
        GiouConvention::Standard => 1.0 - g,
        GiouConvention::PaperLiteral => g,
    };
    RegressionTerms { l1, giou, mse, bce: bce(prob, e).0 }
}

pub fn regression_loss(
    pred: &[f64; 4],
    prob: f64,
    target: &BBox,
    e: f64,
    weights: &LossWeights,
    convention: GiouConvention,
) -> f64 {
    regression_terms(pred, prob, target, e, convention).total(weights)
}

/// Gradient of a generalized IoU variant with respect to the predicted `[x, y, w, h]`.
///
/// Follows the value function branch for branch: zero where the union (for the
/// IoU part) or the hull is below `EPS`.
pub fn giou_grad(pred: &[f64; 4], target: &BBox, convention: GiouConvention) -> [f64; 4] {
    let (px0, py0, px1, py1) = (pred[0], pred[1], pred[0] + pred[2], pred[1] + pred[3]);
    let (tx0, ty0, tx1, ty1) = (target.x, target.y, target.x1(), target.y1());

    // d/d(px0, py0, px1, py1) of each quantity
    let iw_raw = px1.min(tx1) - px0.max(tx0);
    let ih_raw = py1.min(ty1) - py0.max(ty0);
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let d_iw = if iw_raw > 0.0 {
        [if px0 > tx0 { -1.0 } else { 0.0 }, 0.0, if px1 < tx1 { 1.0 } else { 0.0 }, 0.0]
    } else {
        [0.0; 4]
    };
    let d_ih = if ih_raw > 0.0 {
        [0.0, if py0 > ty0 { -1.0 } else { 0.0 }, 0.0, if py1 < ty1 { 1.0 } else { 0.0 }]
    } else {
        [0.0; 4]
    };
    let inter = iw * ih;
    let d_inter: [f64; 4] = std::array::from_fn(|k| d_iw[k] * ih + iw * d_ih[k]);

    let (pw, ph) = (px1 - px0, py1 - py0);
    let area_p = pw * ph;
    let d_area_p = [-ph, -pw, ph, pw];
    let union = area_p + target.area() - inter;
    let d_union: [f64; 4] = std::array::from_fn(|k| d_area_p[k] - d_inter[k]);

    let cw = px1.max(tx1) - px0.min(tx0);
    let ch = py1.max(ty1) - py0.min(ty0);
    let d_cw = [if px0 <= tx0 { -1.0 } else { 0.0 }, 0.0, if px1 >= tx1 { 1.0 } else { 0.0 }, 0.0];
    let d_ch = [0.0, if py0 <= ty0 { -1.0 } else { 0.0 }, 0.0, if py1 >= ty1 { 1.0 } else { 0.0 }];
    let hull = cw * ch;
    let d_hull: [f64; 4] = std::array::from_fn(|k| d_cw[k] * ch + cw * d_ch[k]);

    if hull < EPS {
        return [0.0; 4];
    }
    let d_iou: [f64; 4] = if union < EPS {
        [0.0; 4]
    } else {
        std::array::from_fn(|k| (d_inter[k] * union - inter * d_union[k]) / (union * union))
    };
    // giou = iou - 1 + N / C with N the union (standard) or the intersection (printed)
    let (n, d_n) = match convention {
        GiouConvention::Standard => (union, d_union),
        GiouConvention::PaperLiteral => (inter, d_inter),
    };
    let d_corner: [f64; 4] =
        std::array::from_fn(|k| d_iou[k] + (d_n[k] * hull - n * d_hull[k]) / (hull * hull));
    // x1 = x + w, y1 = y + h
    [d_corner[0] + d_corner[2], d_corner[1] + d_corner[3], d_corner[2], d_corner[3]]
}

/// Regression loss and its gradient with respect to the four box outputs and the
/// veracity probability.
pub fn regression_grad(
    pred: &[f64; 4],
    prob: f64,
    target: &BBox,
    e: f64,
    weights: &LossWeights,
    convention: GiouConvention,
) -> (f64, [f64; 4], f64) {
    let loss = regression_loss(pred, prob, target, e, weights, convention);
    let t = target.as_array();
    let dg = giou_grad(pred, target, convention);
    let sign = match convention {
        GiouConvention::Standard => -1.0,
        GiouConvention::PaperLiteral => 1.0,
    };
    let d_box = std::array::from_fn(|k| {
        let diff = pred[k] - t[k];
        let l1 = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        weights.l1 * l1 + weights.giou * sign * dg[k] + weights.mse * 2.0 * diff
    });
    let d_prob = weights.bce * bce(prob, e).1;
    (loss, d_box, d_prob)
}
