//! Central-difference check of the backward pass.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_cross_entropy, Dignn, Mode};
use crate::error::Result;
use crate::graph::Graph;
use crate::linalg::Matrix;

/// Solver settings used while checking, so that the fixed point (and the
/// adjoint) are resolved far below the finite-difference error. Much tighter
/// absolute tolerances sit at the round-off floor of the residual and stall.
pub const CHECK_TOL: f64 = 1e-12;
pub const CHECK_MAX_ITER: usize = 100_000;
/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    /// max relative error per parameter group, keyed by group name
    pub max_rel_error: BTreeMap<String, f64>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.values().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.worst() < threshold
    }
}

/// Compares the implicit backward pass with central differences of the
/// training-mode loss for every scalar parameter.
///
/// Dropout is disabled and the solver tolerance tightened on a copy of the
/// model; batch normalization uses batch statistics as in training.
/// Relative error is `|a - f| / max(|a|, |f|, 1e-6)`.
pub fn grad_check(
    model: &Dignn,
    g: &Graph,
    x: &Matrix,
    labels: &[usize],
    mask: &[bool],
    step: f64,
) -> Result<GradCheckReport> {
    let mut m = model.clone();
    m.dropout = 0.0;
    m.tol = CHECK_TOL;
    m.max_iter = CHECK_MAX_ITER;
    // dropout is off, so the generator is never consulted
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, cache) = m.forward(g, x, Mode::Train(&mut rng))?;
    let grads = m.backward(&cache, labels, mask)?;

    let loss_at = |m: &Dignn| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (logits, _) = m.forward(g, x, Mode::Train(&mut rng))?;
        loss_cross_entropy(&logits, labels, mask)
    };

    let mut report = BTreeMap::new();
    let num_params = m.params().len();
    for k in 0..num_params {
        let (group, len) = {
            let (gr, p) = &m.params()[k];
            (*gr, p.len())
        };
        let analytic = &grads.entries[k].1;
        let worst = report.entry(group.name().to_string()).or_insert(0.0f64);
        for idx in 0..len {
            let mut plus = m.clone();
            plus.params_mut()[k].1[idx] += step;
            let mut minus = m.clone();
            minus.params_mut()[k].1[idx] -= step;
            let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * step);
            let a = analytic[idx];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(REL_FLOOR);
            if rel.is_nan() {
                *worst = f64::INFINITY;
            } else {
                *worst = worst.max(rel);
            }
        }
    }
    Ok(GradCheckReport { step, max_rel_error: report })
}
