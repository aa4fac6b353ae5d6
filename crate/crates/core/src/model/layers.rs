//! Dense layers, dropout and batch normalization with hand-written backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{matrix_serde, uniform_init, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative given the pre-activation `v` and output `y`.
    fn derivative(self, v: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// `y = act(x W^T + b)`, with `W` of shape `out x in` and `b` a `1 x out` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    #[serde(with = "matrix_serde")]
    pub weights: Matrix,
    #[serde(with = "matrix_serde")]
    pub bias: Matrix,
    pub activation: Activation,
}

/// Values kept by a dense layer's forward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    /// input after dropout
    input: Matrix,
    /// dropout multipliers (`0` or `1/keep`), absent when dropout is off
    mask: Option<Matrix>,
    pre: Matrix,
    output: Matrix,
}

impl DenseCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl DenseLayer {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Self {
            weights: uniform_init(output, input, input, rng),
            bias: uniform_init(1, output, input, rng),
            activation,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weights: Matrix::identity(dim, dim),
            bias: Matrix::zeros(1, dim),
            activation: Activation::Identity,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: &Matrix, dropout: Option<(f64, &mut dyn rand::RngCore)>) -> DenseCache {
        let (input, mask) = match dropout {
            Some((rate, rng)) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let mask = Matrix::from_fn(x.nrows(), x.ncols(), |_, _| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (x.component_mul(&mask), Some(mask))
            }
            _ => (x.clone(), None),
        };
        let mut pre = &input * self.weights.transpose();
        for mut row in pre.row_iter_mut() {
            row += &self.bias;
        }
        let output = pre.map(|v| self.activation.apply(v));
        DenseCache { input, mask, pre, output }
    }

    /// Returns `(dW, db, dx)` for upstream gradient `dy`.
    pub fn backward(&self, cache: &DenseCache, dy: &Matrix) -> (Matrix, Matrix, Matrix) {
        let dpre = Matrix::from_fn(dy.nrows(), dy.ncols(), |r, c| {
            dy[(r, c)] * self.activation.derivative(cache.pre[(r, c)], cache.output[(r, c)])
        });
        let dw = dpre.transpose() * &cache.input;
        let db = Matrix::from_fn(1, dpre.ncols(), |_, c| dpre.column(c).sum());
        let mut dx = &dpre * &self.weights;
        if let Some(mask) = &cache.mask {
            dx.component_mul_assign(mask);
        }
        (dw, db, dx)
    }
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-feature batch normalization with learnable scale and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    #[serde(with = "matrix_serde")]
    pub scale: Matrix,
    #[serde(with = "matrix_serde")]
    pub shift: Matrix,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
    /// batch statistics, present in training mode
    batch: Option<(Vec<f64>, Vec<f64>)>,
}

impl BatchNormCache {
    pub fn batch_stats(&self) -> Option<&(Vec<f64>, Vec<f64>)> {
        self.batch.as_ref()
    }
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            scale: Matrix::from_element(1, dim, 1.0),
            shift: Matrix::zeros(1, dim),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    /// Normalizes with batch statistics (biased variance) when `training`,
    /// with running statistics otherwise.
    pub fn forward(&self, x: &Matrix, training: bool) -> (Matrix, BatchNormCache) {
        let (n, d) = x.shape();
        let (mean, var, batch) = if training && n > 0 {
            let mean: Vec<f64> = (0..d).map(|c| x.column(c).mean()).collect();
            let var: Vec<f64> = (0..d)
                .map(|c| x.column(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n as f64)
                .collect();
            (mean.clone(), var.clone(), Some((mean, var)))
        } else {
            (self.running_mean.clone(), self.running_var.clone(), None)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let normalized = Matrix::from_fn(n, d, |r, c| (x[(r, c)] - mean[c]) * inv_std[c]);
        let y = Matrix::from_fn(n, d, |r, c| normalized[(r, c)] * self.scale[(0, c)] + self.shift[(0, c)]);
        (y, BatchNormCache { normalized, inv_std, batch })
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if let Some((mean, var)) = &cache.batch {
            let m = self.momentum;
            for c in 0..mean.len() {
                self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean[c];
                self.running_var[c] = (1.0 - m) * self.running_var[c] + m * var[c];
            }
        }
    }

    /// Returns `(dscale, dshift, dx)`.
    pub fn backward(&self, cache: &BatchNormCache, dy: &Matrix) -> (Matrix, Matrix, Matrix) {
        let (n, d) = dy.shape();
        let xhat = &cache.normalized;
        let dscale = Matrix::from_fn(1, d, |_, c| dy.column(c).dot(&xhat.column(c)));
        let dshift = Matrix::from_fn(1, d, |_, c| dy.column(c).sum());
        let mut dx = Matrix::zeros(n, d);
        for c in 0..d {
            let g = self.scale[(0, c)];
            if cache.batch.is_some() {
                let nf = n as f64;
                let sum_dxhat: f64 = dy.column(c).sum() * g;
                let sum_dxhat_xhat: f64 = dscale[(0, c)] * g;
                for r in 0..n {
                    let dxhat = dy[(r, c)] * g;
                    dx[(r, c)] = cache.inv_std[c] / nf
                        * (nf * dxhat - sum_dxhat - xhat[(r, c)] * sum_dxhat_xhat);
                }
            } else {
                for r in 0..n {
                    dx[(r, c)] = dy[(r, c)] * g * cache.inv_std[c];
                }
            }
        }
        (dscale, dshift, dx)
    }
}
