//! Frozen patch features standing in for a pretrained image backbone.
//!
//! The image is cut into a `grid x grid` patch lattice. In each patch the
//! foreground pixels (intensity above `threshold`) are counted and their mean
//! intensity is snapped to the nearest glyph code, giving one active feature
//! `patch * codes + code` whose value is the foreground fraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toyworld::{glyph_codes, ToyImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub width: usize,
    pub height: usize,
    pub grid: usize,
    pub threshold: f64,
    pub codes: Vec<f64>,
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseFeatures {
    pub index: Vec<usize>,
    pub value: Vec<f64>,
}

impl FeatureSpec {
    /// Features for `width x height` toy images drawn with `findings` glyph codes.
    pub fn toy(width: usize, height: usize, grid: usize, findings: usize) -> Self {
        FeatureSpec { width, height, grid, threshold: 0.15, codes: glyph_codes(findings) }
    }

    pub fn dim(&self) -> usize {
        self.grid * self.grid * self.codes.len()
    }

    fn nearest_code(&self, v: f64) -> usize {
        let mut best = 0;
        for (k, c) in self.codes.iter().enumerate() {
            if (v - c).abs() < (v - self.codes[best]).abs() {
                best = k;
            }
        }
        best
    }

    pub fn extract(&self, img: &ToyImage) -> Result<SparseFeatures> {
        if img.width != self.width || img.height != self.height {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", img.width, img.height),
            });
        }
        let g = self.grid;
        let mut total = vec![0usize; g * g];
        let mut count = vec![0usize; g * g];
        let mut sum = vec![0.0f64; g * g];
        for y in 0..img.height {
            let py = y * g / img.height;
            for x in 0..img.width {
                let p = py * g + x * g / img.width;
                total[p] += 1;
                let v = img.intensity(x, y);
                if v > self.threshold {
                    count[p] += 1;
                    sum[p] += v;
                }
            }
        }
        let mut out = SparseFeatures::default();
        for p in 0..g * g {
            if count[p] > 0 {
                let code = self.nearest_code(sum[p] / count[p] as f64);
                out.index.push(p * self.codes.len() + code);
                out.value.push(count[p] as f64 / total[p] as f64);
            }
        }
        Ok(out)
    }
}
