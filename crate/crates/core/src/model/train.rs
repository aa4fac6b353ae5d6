//! Optimizer, training loop, evaluation and checkpoints.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_rows, cross_entropy_with_grad, Dignn, Gradients, Mode};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            weight_decay: 1e-5,
            epochs: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(model: &Dignn, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Matrix> = model
            .params()
            .iter()
            .map(|(_, p)| Matrix::zeros(p.nrows(), p.ncols()))
            .collect();
        Self {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut Dignn, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, ((_, p), (_, g))) in model.params_mut().into_iter().zip(&grads.entries).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for idx in 0..p.len() {
                let gi = g[idx];
                m[idx] = self.beta1 * m[idx] + (1.0 - self.beta1) * gi;
                v[idx] = self.beta2 * v[idx] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[idx] / bc1;
                let vhat = v[idx] / bc2;
                p[idx] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * p[idx]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    /// epoch (1-based) of the best validation accuracy; `None` without training
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
    /// the parameters with the best validation accuracy (first one on ties)
    pub model: Dignn,
    pub rng: ChaCha8Rng,
}

/// One JSON object per line.
pub fn metrics_jsonl(metrics: &[EpochMetrics]) -> Result<String> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m)?);
        out.push('\n');
    }
    Ok(out)
}

/// Predicted class per output row in evaluation mode.
pub fn predict(model: &Dignn, ds: &Dataset) -> Result<Vec<usize>> {
    let (logits, _) = model.forward_dataset(ds, Mode::Eval)?;
    Ok(argmax_rows(&logits))
}

fn accuracy(pred: &[usize], labels: &[usize], mask: &[bool]) -> Option<f64> {
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return None;
    }
    let correct = idx.iter().filter(|&&i| pred[i] == labels[i]).count();
    Some(correct as f64 / idx.len() as f64)
}

/// Accuracy on a split in evaluation mode.
pub fn evaluate(model: &Dignn, ds: &Dataset, split: Split) -> Result<f64> {
    let pred = predict(model, ds)?;
    accuracy(&pred, ds.labels(), ds.mask(split)).ok_or_else(|| Error::EmptySplit(split.name().into()))
}

/// Seeded full-batch training. Each epoch runs a training-mode forward pass
/// (dropout, batch statistics), the implicit backward pass and one optimizer
/// step, then measures accuracies in evaluation mode.
pub fn train(model: Dignn, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model;
    if cfg.epochs == 0 {
        return Ok(TrainReport { metrics: Vec::new(), best_epoch: None, best_val_acc: None, model, rng });
    }
    if !ds.mask(Split::Val).iter().any(|&m| m) {
        return Err(Error::EmptySplit("val".into()));
    }
    let labels = ds.labels();
    let train_mask = ds.mask(Split::Train);
    let mut opt = AdamW::new(&model, cfg);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Dignn)> = None;
    let mut adjoint_shortfalls = 0;
    for epoch in 1..=cfg.epochs {
        let (logits, cache) = model.forward_dataset(ds, Mode::Train(&mut rng))?;
        let (loss, dlogits) = cross_entropy_with_grad(&logits, labels, train_mask)?;
        let grads = model.backward_from_logits(&cache, &dlogits)?;
        if !grads.adjoint_converged {
            adjoint_shortfalls += 1;
        }
        model.update_batch_norm(&cache);
        opt.step(&mut model, &grads);

        if model.geometry().is_some() {
            let b = model.monitor_bounds(cache.x_tilde())?;
            if !b.ok {
                log::debug!("epoch {epoch}: mu {} <= geometry bound {:.4}", b.mu, b.bound);
            }
        }

        let pred = predict(&model, ds)?;
        let train_acc = accuracy(&pred, labels, train_mask).unwrap_or(0.0);
        let val_acc = accuracy(&pred, labels, ds.mask(Split::Val)).expect("checked non-empty");
        metrics.push(EpochMetrics { epoch, train_loss: loss, train_acc, val_acc });
        if best.as_ref().is_none_or(|(_, b, _)| val_acc > *b) {
            best = Some((epoch, val_acc, model.clone()));
        }
    }
    if adjoint_shortfalls > 0 {
        log::info!("adjoint solve hit max_iter in {adjoint_shortfalls} of {} epochs", cfg.epochs);
    }
    let (best_epoch, best_val, best_model) = best.expect("at least one epoch");
    Ok(TrainReport {
        metrics,
        best_epoch: Some(best_epoch),
        best_val_acc: Some(best_val),
        model: best_model,
        rng,
    })
}

/// Versioned JSON checkpoint: parameters, configuration and RNG state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: Dignn,
    pub train_config: Option<TrainConfig>,
    pub rng: Option<ChaCha8Rng>,
}

impl Checkpoint {
    pub fn new(model: Dignn, train_config: Option<TrainConfig>, rng: Option<ChaCha8Rng>) -> Self {
        Self { version: CHECKPOINT_VERSION, model, train_config, rng }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }
}
