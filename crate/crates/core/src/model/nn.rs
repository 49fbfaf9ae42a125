//! Dense layers with hand-written backward passes.

use rand::Rng as _;

use crate::rng::Rng;

/// Affine map `y = x W + b`; `w` is stored input-major (`w[i * outputs + o]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, r: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs).map(|_| r.random_range(-limit..limit)).collect();
        Linear { inputs, outputs, w, b: vec![0.0; outputs] }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear { inputs, outputs, w: vec![0.0; inputs * outputs], b: vec![0.0; outputs] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        let mut y = self.b.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w[i * self.outputs..(i + 1) * self.outputs];
            for (yo, wo) in y.iter_mut().zip(row) {
                *yo += xi * wo;
            }
        }
        y
    }

    pub fn forward_sparse(&self, index: &[usize], value: &[f64]) -> Vec<f64> {
        let mut y = self.b.clone();
        for (&i, &xi) in index.iter().zip(value) {
            let row = &self.w[i * self.outputs..(i + 1) * self.outputs];
            for (yo, wo) in y.iter_mut().zip(row) {
                *yo += xi * wo;
            }
        }
        y
    }

    /// Accumulate parameter gradients into `grad` and return `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (gb, d) in grad.b.iter_mut().zip(dy) {
            *gb += d;
        }
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.w[i * self.outputs..(i + 1) * self.outputs];
            let grow = &mut grad.w[i * self.outputs..(i + 1) * self.outputs];
            let mut acc = 0.0;
            for ((g, w), d) in grow.iter_mut().zip(row).zip(dy) {
                *g += xi * d;
                acc += w * d;
            }
            dx[i] = acc;
        }
        dx
    }

    /// Parameter gradients for a sparse input; the input gradient is not needed.
    pub fn backward_sparse(&self, index: &[usize], value: &[f64], dy: &[f64], grad: &mut Linear) {
        for (gb, d) in grad.b.iter_mut().zip(dy) {
            *gb += d;
        }
        for (&i, &xi) in index.iter().zip(value) {
            let grow = &mut grad.w[i * self.outputs..(i + 1) * self.outputs];
            for (g, d) in grow.iter_mut().zip(dy) {
                *g += xi * d;
            }
        }
    }
}

/// Lookup table of `rows` vectors of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Table {
    pub fn new(rows: usize, dim: usize, r: &mut Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let data = (0..rows * dim).map(|_| r.random_range(-scale..scale)).collect();
        Table { rows, dim, data }
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Table { rows, dim, data: vec![0.0; rows * dim] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn accumulate(&mut self, i: usize, d: &[f64]) {
        for (g, v) in self.data[i * self.dim..(i + 1) * self.dim].iter_mut().zip(d) {
            *g += v;
        }
    }
}

pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// Gradient through ReLU given its pre-activation.
pub fn relu_backward(pre: &[f64], d: &[f64]) -> Vec<f64> {
    pre.iter().zip(d).map(|(&p, &g)| if p > 0.0 { g } else { 0.0 }).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vector along `u` and the norm it was divided by.
pub fn l2_normalize(u: &[f64]) -> (Vec<f64>, f64) {
    let norm = dot(u, u).sqrt().max(1e-12);
    (u.iter().map(|x| x / norm).collect(), norm)
}

/// Gradient through `z = u / |u|`.
pub fn l2_normalize_backward(z: &[f64], norm: f64, dz: &[f64]) -> Vec<f64> {
    let proj = dot(z, dz);
    z.iter().zip(dz).map(|(zi, di)| (di - zi * proj) / norm).collect()
}
