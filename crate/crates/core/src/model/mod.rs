//! The trainable implicit diffusion network.
//!
//! ```text
//! X~ = BN(h1(X))            (or BN(A X))
//! Z* = X~ - (1/mu) Delta Z* (fixed point, Delta fixed or built from X~)
//! Y^ = h2(Z*)               (optionally mean-pooled per graph first)
//! ```
//!
//! The backward pass never unrolls the fixed-point iteration. It solves the
//! adjoint system `V = G - (1/mu) Delta^T V` for `G = dl/dZ*`, which gives
//! `dl/dX~ = V` and, for a feature-driven Laplacian, per-arc coefficient
//! gradients `-(1/mu) <V_i, Z*_i - Z*_j>`.

mod gradcheck;
mod layers;
mod train;

pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{Activation, BatchNorm, BatchNormCache, DenseCache, DenseLayer};
pub use train::{
    evaluate, metrics_jsonl, predict, train, AdamW, Checkpoint, EpochMetrics, TrainConfig,
    TrainReport, CHECKPOINT_VERSION,
};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::equilibrium::{implicit_iterates, solve_implicit_layer, EquilibriumResult};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::laplacian::{
    backprop_coefficients, build_parameterized_traced, GeometryParams, GeometryTrace,
    LaplacianOperator,
};
use crate::linalg::{frobenius, spectral_norm, Matrix};
use crate::spectral::spectral_bound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    Mlp,
    AdjacencyTimesFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    None,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianChoice {
    RandomWalk,
    Parameterized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelLaplacian {
    RandomWalk,
    Parameterized(GeometryParams),
}

/// Architecture hyperparameters. Defaults follow the PubMed row of the
/// published hyperparameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub dropout: f64,
    pub preprocess_layers: usize,
    pub preprocess_mode: PreprocessMode,
    pub activation: Activation,
    pub laplacian: LaplacianChoice,
    pub geometry_hidden: usize,
    pub batch_norm: bool,
    pub readout: Readout,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 0,
            hidden: 64,
            num_classes: 2,
            mu: 2.5,
            tol: 1e-6,
            max_iter: 10,
            dropout: 0.5,
            preprocess_layers: 1,
            preprocess_mode: PreprocessMode::Mlp,
            activation: Activation::Relu,
            laplacian: LaplacianChoice::RandomWalk,
            geometry_hidden: 16,
            batch_norm: true,
            readout: Readout::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Preprocess,
    BatchNorm,
    ThetaChi,
    ThetaPhi,
    ThetaVarphi,
    Output,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Preprocess => "preprocess",
            ParamGroup::BatchNorm => "batch_norm",
            ParamGroup::ThetaChi => "theta_chi",
            ParamGroup::ThetaPhi => "theta_phi",
            ParamGroup::ThetaVarphi => "theta_varphi",
            ParamGroup::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dignn {
    pub preprocess: Vec<DenseLayer>,
    pub preprocess_mode: PreprocessMode,
    pub norm: Option<BatchNorm>,
    pub laplacian: ModelLaplacian,
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub dropout: f64,
    pub output: Vec<DenseLayer>,
    pub readout: Readout,
}

/// Forward evaluation mode. Training uses dropout (drawn from the given RNG)
/// and batch statistics; evaluation uses neither.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    preprocess: Vec<DenseCache>,
    bn_input: Matrix,
    bn: Option<BatchNormCache>,
    x_tilde: Matrix,
    op: LaplacianOperator,
    trace: Option<GeometryTrace>,
    equilibrium: EquilibriumResult,
    /// `Z^0 .. Z^K` when the diffusion was unrolled for `K` steps
    iterates: Option<Vec<Matrix>>,
    pool: Option<(Vec<usize>, Vec<f64>)>,
    output: Vec<DenseCache>,
    logits: Matrix,
}

impl ForwardCache {
    pub fn x_tilde(&self) -> &Matrix {
        &self.x_tilde
    }

    pub fn z_star(&self) -> &Matrix {
        &self.equilibrium.z_star
    }

    pub fn equilibrium(&self) -> &EquilibriumResult {
        &self.equilibrium
    }

    pub fn operator(&self) -> &LaplacianOperator {
        &self.op
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn batch_norm(&self) -> Option<&BatchNormCache> {
        self.bn.as_ref()
    }
}

/// Parameter gradients, in the same order as [`Dignn::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entries: Vec<(ParamGroup, Matrix)>,
    /// whether the adjoint iteration met the solver tolerance
    pub adjoint_converged: bool,
}

impl Gradients {
    pub fn group(&self, g: ParamGroup) -> impl Iterator<Item = &Matrix> {
        self.entries.iter().filter(move |(k, _)| *k == g).map(|(_, m)| m)
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut gs: Vec<ParamGroup> = self.entries.iter().map(|(g, _)| *g).collect();
        gs.dedup();
        gs
    }
}

/// Solution of the adjoint system `V = G - (1/mu) Delta^T V`.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub v: Matrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Fixed-point iteration for `(I + Delta^T/mu) V = G` from `V = 0`.
///
/// Running out of iterations is reported through `converged`; only growth of
/// the residual (divergence) is an error.
pub fn implicit_adjoint(
    op: &LaplacianOperator,
    upstream: &Matrix,
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<AdjointSolution> {
    let mut v = Matrix::zeros(upstream.nrows(), upstream.ncols());
    let mut first = None;
    let mut last = f64::INFINITY;
    for it in 1..=max_iter.max(1) {
        let next = upstream - op.apply_transpose(&v)? / mu;
        last = frobenius(&(&next - &v));
        v = next;
        let first = *first.get_or_insert(last);
        if !last.is_finite() {
            return Err(Error::AdjointNoConvergence { first, last });
        }
        if last <= tol {
            return Ok(AdjointSolution { v, iterations: it, converged: true });
        }
    }
    let first = first.unwrap_or(last);
    if last > first {
        return Err(Error::AdjointNoConvergence { first, last });
    }
    Ok(AdjointSolution { v, iterations: max_iter.max(1), converged: false })
}

/// Per-arc `-(1/mu) <V_i, Z_i - Z_j>`: the gradient of `<V, X - (1/mu) Delta Z>`
/// with respect to the arc coefficients of `Delta`.
pub fn coefficient_gradient(op: &LaplacianOperator, z: &Matrix, v: &Matrix, mu: f64) -> Vec<f64> {
    op.graph()
        .arcs()
        .map(|(i, j, _)| -(v.row(i).dot(&(z.row(i) - z.row(j)))) / mu)
        .collect()
}

/// Mean softmax cross-entropy over the masked rows.
pub fn loss_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    cross_entropy_with_grad(logits, labels, mask).map(|(l, _)| l)
}

/// Loss and its gradient `(softmax - onehot) / |mask|` on masked rows.
pub fn cross_entropy_with_grad(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.nrows() || mask.len() != logits.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows, {} labels, {} mask entries",
            logits.nrows(),
            labels.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let k = logits.ncols();
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.nrows(), k);
    for i in (0..logits.nrows()).filter(|&i| mask[i]) {
        if labels[i] >= k {
            return Err(Error::InvalidArgument(format!("label {} outside {k} classes", labels[i])));
        }
        let row = logits.row(i);
        let m = row.max();
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - row[labels[i]];
        for c in 0..k {
            grad[(i, c)] = (row[c] - lse).exp() / count as f64;
        }
        grad[(i, labels[i])] -= 1.0 / count as f64;
    }
    Ok((loss / count as f64, grad))
}

/// Argmax per row; ties go to the lowest class index.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    (0..logits.nrows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Output of [`Dignn::monitor_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theta_chi_norm: f64,
    pub theta_phi_norm: f64,
    pub beta_hat: f64,
    pub bound: f64,
    pub mu: f64,
    pub ok: bool,
}

impl Dignn {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(cfg.mu > 0.0) {
            return Err(Error::InvalidArgument(format!("mu must be positive, got {}", cfg.mu)));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} not in [0, 1)", cfg.dropout)));
        }
        let (preprocess, hidden) = match cfg.preprocess_mode {
            PreprocessMode::Mlp => {
                let mut layers = Vec::new();
                let mut dim = cfg.input_dim;
                for _ in 0..cfg.preprocess_layers {
                    layers.push(DenseLayer::new(dim, cfg.hidden, cfg.activation, rng));
                    dim = cfg.hidden;
                }
                (layers, dim)
            }
            PreprocessMode::AdjacencyTimesFeatures => (Vec::new(), cfg.input_dim),
        };
        let laplacian = match cfg.laplacian {
            LaplacianChoice::RandomWalk => ModelLaplacian::RandomWalk,
            LaplacianChoice::Parameterized => {
                ModelLaplacian::Parameterized(GeometryParams::random(hidden, cfg.geometry_hidden, rng))
            }
        };
        Ok(Self {
            preprocess,
            preprocess_mode: cfg.preprocess_mode,
            norm: cfg.batch_norm.then(|| BatchNorm::new(hidden)),
            laplacian,
            mu: cfg.mu,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            dropout: cfg.dropout,
            output: vec![DenseLayer::new(hidden, cfg.num_classes, Activation::Identity, rng)],
            readout: cfg.readout,
        })
    }

    pub fn geometry(&self) -> Option<&GeometryParams> {
        match &self.laplacian {
            ModelLaplacian::Parameterized(p) => Some(p),
            ModelLaplacian::RandomWalk => None,
        }
    }

    /// All trainable matrices in a fixed order.
    pub fn params(&self) -> Vec<(ParamGroup, &Matrix)> {
        let mut out = Vec::new();
        for l in &self.preprocess {
            out.push((ParamGroup::Preprocess, &l.weights));
            out.push((ParamGroup::Preprocess, &l.bias));
        }
        if let Some(bn) = &self.norm {
            out.push((ParamGroup::BatchNorm, &bn.scale));
            out.push((ParamGroup::BatchNorm, &bn.shift));
        }
        if let ModelLaplacian::Parameterized(p) = &self.laplacian {
            out.push((ParamGroup::ThetaChi, &p.theta_chi));
            out.push((ParamGroup::ThetaPhi, &p.theta_phi));
            out.push((ParamGroup::ThetaVarphi, &p.theta_varphi));
        }
        for l in &self.output {
            out.push((ParamGroup::Output, &l.weights));
            out.push((ParamGroup::Output, &l.bias));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(ParamGroup, &mut Matrix)> {
        let mut out = Vec::new();
        for l in &mut self.preprocess {
            out.push((ParamGroup::Preprocess, &mut l.weights));
            out.push((ParamGroup::Preprocess, &mut l.bias));
        }
        if let Some(bn) = &mut self.norm {
            out.push((ParamGroup::BatchNorm, &mut bn.scale));
            out.push((ParamGroup::BatchNorm, &mut bn.shift));
        }
        if let ModelLaplacian::Parameterized(p) = &mut self.laplacian {
            out.push((ParamGroup::ThetaChi, &mut p.theta_chi));
            out.push((ParamGroup::ThetaPhi, &mut p.theta_phi));
            out.push((ParamGroup::ThetaVarphi, &mut p.theta_varphi));
        }
        for l in &mut self.output {
            out.push((ParamGroup::Output, &mut l.weights));
            out.push((ParamGroup::Output, &mut l.bias));
        }
        out
    }

    /// Node-level forward pass; with a mean readout all nodes pool into one row.
    pub fn forward(&self, g: &Graph, x: &Matrix, mode: Mode<'_>) -> Result<(Matrix, ForwardCache)> {
        let membership = (self.readout == Readout::Mean).then(|| vec![0; g.num_nodes()]);
        self.forward_impl(g, x, membership.as_deref(), mode, None)
    }

    /// Forward pass pooling node `i` into output row `membership[i]` when the
    /// readout is `Mean`.
    pub fn forward_pooled(
        &self,
        g: &Graph,
        x: &Matrix,
        membership: Option<&[usize]>,
        mode: Mode<'_>,
    ) -> Result<(Matrix, ForwardCache)> {
        self.forward_impl(g, x, membership, mode, None)
    }

    /// Forward pass with exactly `steps` diffusion iterations from `Z = 0`;
    /// [`Dignn::backward`] then backpropagates through the unrolled iterates.
    pub fn forward_unrolled(
        &self,
        g: &Graph,
        x: &Matrix,
        mode: Mode<'_>,
        steps: usize,
    ) -> Result<(Matrix, ForwardCache)> {
        let membership = (self.readout == Readout::Mean).then(|| vec![0; g.num_nodes()]);
        self.forward_impl(g, x, membership.as_deref(), mode, Some(steps))
    }

    /// Forward pass over a dataset, pooling per graph for graph-level tasks.
    pub fn forward_dataset(&self, ds: &Dataset, mode: Mode<'_>) -> Result<(Matrix, ForwardCache)> {
        match (&ds.graph_task, self.readout) {
            (Some(task), Readout::Mean) => {
                self.forward_pooled(&ds.graph, &ds.features, Some(&task.membership), mode)
            }
            (Some(_), Readout::None) => Err(Error::InvalidArgument(
                "graph-level dataset needs a mean readout".into(),
            )),
            (None, _) => self.forward(&ds.graph, &ds.features, mode),
        }
    }

    fn forward_impl(
        &self,
        g: &Graph,
        x: &Matrix,
        membership: Option<&[usize]>,
        mut mode: Mode<'_>,
        unroll: Option<usize>,
    ) -> Result<(Matrix, ForwardCache)> {
        if x.nrows() != g.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows for {} nodes",
                x.nrows(),
                g.num_nodes()
            )));
        }
        let training = matches!(mode, Mode::Train(_));
        let dense = |layer: &DenseLayer, h: &Matrix, mode: &mut Mode<'_>| -> Result<DenseCache> {
            if h.ncols() != layer.input_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer expects {} inputs, got {}",
                    layer.input_dim(),
                    h.ncols()
                )));
            }
            Ok(match mode {
                Mode::Train(rng) => layer.forward(h, Some((self.dropout, &mut **rng))),
                Mode::Eval => layer.forward(h, None),
            })
        };

        let mut h = match self.preprocess_mode {
            PreprocessMode::Mlp => x.clone(),
            PreprocessMode::AdjacencyTimesFeatures => g.adjacency_times(x)?,
        };
        let mut preprocess = Vec::with_capacity(self.preprocess.len());
        for layer in &self.preprocess {
            let c = dense(layer, &h, &mut mode)?;
            h = c.output().clone();
            preprocess.push(c);
        }
        let bn_input = h;
        let (x_tilde, bn) = match &self.norm {
            Some(bn) => {
                let (y, c) = bn.forward(&bn_input, training);
                (y, Some(c))
            }
            None => (bn_input.clone(), None),
        };

        let (op, trace) = match &self.laplacian {
            ModelLaplacian::RandomWalk => (LaplacianOperator::random_walk_allowing_isolated(g), None),
            ModelLaplacian::Parameterized(p) => {
                let (op, t) = build_parameterized_traced(g, &x_tilde, p)?;
                (op, Some(t))
            }
        };

        let (equilibrium, iterates) = match unroll {
            None => (solve_implicit_layer(&op, &x_tilde, self.mu, self.tol, self.max_iter)?, None),
            Some(k) => {
                let its: Vec<Matrix> = implicit_iterates(&op, &x_tilde, self.mu)?.take(k + 1).collect();
                let z = its.last().cloned().expect("at least Z^0");
                let residual_history = its.windows(2).map(|w| frobenius(&(&w[1] - &w[0]))).collect();
                let eq = EquilibriumResult {
                    z_star_norm: frobenius(&z),
                    z_star: z,
                    iterations: k,
                    residual_history,
                    converged: false,
                };
                (eq, Some(its))
            }
        };

        let (mut h, pool) = match membership {
            Some(m) => {
                let (pooled, counts) = mean_pool(&equilibrium.z_star, m)?;
                (pooled, Some((m.to_vec(), counts)))
            }
            None => (equilibrium.z_star.clone(), None),
        };
        let mut output = Vec::with_capacity(self.output.len());
        for layer in &self.output {
            let c = dense(layer, &h, &mut mode)?;
            h = c.output().clone();
            output.push(c);
        }
        let logits = h;
        let cache = ForwardCache {
            preprocess,
            bn_input,
            bn,
            x_tilde,
            op,
            trace,
            equilibrium,
            iterates,
            pool,
            output,
            logits: logits.clone(),
        };
        Ok((logits, cache))
    }

    /// Cross-entropy loss and parameter gradients for a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize], mask: &[bool]) -> Result<Gradients> {
        let (_, dlogits) = cross_entropy_with_grad(&cache.logits, labels, mask)?;
        self.backward_from_logits(cache, &dlogits)
    }

    /// Backward pass for an arbitrary upstream gradient at the logits.
    pub fn backward_from_logits(&self, cache: &ForwardCache, dlogits: &Matrix) -> Result<Gradients> {
        let mut out_grads = Vec::new();
        let mut dh = dlogits.clone();
        for (layer, c) in self.output.iter().zip(&cache.output).rev() {
            let (dw, db, dx) = layer.backward(c, &dh);
            out_grads.push((dw, db));
            dh = dx;
        }
        out_grads.reverse();

        let dz = match &cache.pool {
            Some((m, counts)) => Matrix::from_fn(m.len(), dh.ncols(), |i, c| dh[(m[i], c)] / counts[m[i]]),
            None => dh,
        };

        let z = &cache.equilibrium.z_star;
        let geometry = self.geometry();
        let (mut dx_tilde, dcoeff, adjoint_converged) = match &cache.iterates {
            None => {
                let adj = implicit_adjoint(&cache.op, &dz, self.mu, self.tol, self.max_iter)?;
                let dcoeff = geometry.map(|_| coefficient_gradient(&cache.op, z, &adj.v, self.mu));
                (adj.v, dcoeff, adj.converged)
            }
            Some(its) => {
                let mut a = dz;
                let mut dx = Matrix::zeros(a.nrows(), a.ncols());
                let mut dcoeff = geometry.map(|_| vec![0.0; cache.op.graph().num_arcs()]);
                for t in (0..its.len() - 1).rev() {
                    dx += &a;
                    if let Some(dc) = dcoeff.as_mut() {
                        for (acc, v) in dc.iter_mut().zip(coefficient_gradient(&cache.op, &its[t], &a, self.mu)) {
                            *acc += v;
                        }
                    }
                    a = -cache.op.apply_transpose(&a)? / self.mu;
                }
                (dx, dcoeff, true)
            }
        };

        let mut geo_grads = None;
        if let (Some(p), Some(trace), Some(dc)) = (geometry, &cache.trace, dcoeff) {
            let (gg, dx_geo) = backprop_coefficients(&cache.op, trace, &cache.x_tilde, p, &dc);
            dx_tilde += dx_geo;
            geo_grads = Some(gg);
        }

        let (bn_grads, mut dh) = match (&self.norm, &cache.bn) {
            (Some(bn), Some(c)) => {
                let (ds, dsh, dx) = bn.backward(c, &dx_tilde);
                (Some((ds, dsh)), dx)
            }
            _ => (None, dx_tilde),
        };
        debug_assert_eq!(dh.shape(), cache.bn_input.shape());

        let mut pre_grads = Vec::new();
        for (layer, c) in self.preprocess.iter().zip(&cache.preprocess).rev() {
            let (dw, db, dx) = layer.backward(c, &dh);
            pre_grads.push((dw, db));
            dh = dx;
        }
        pre_grads.reverse();

        let mut entries = Vec::new();
        for (dw, db) in pre_grads {
            entries.push((ParamGroup::Preprocess, dw));
            entries.push((ParamGroup::Preprocess, db));
        }
        if let Some((ds, dsh)) = bn_grads {
            entries.push((ParamGroup::BatchNorm, ds));
            entries.push((ParamGroup::BatchNorm, dsh));
        }
        if let Some(gg) = geo_grads {
            entries.push((ParamGroup::ThetaChi, gg.theta_chi));
            entries.push((ParamGroup::ThetaPhi, gg.theta_phi));
            entries.push((ParamGroup::ThetaVarphi, gg.theta_varphi));
        }
        for (dw, db) in out_grads {
            entries.push((ParamGroup::Output, dw));
            entries.push((ParamGroup::Output, db));
        }
        if let Some((g, _)) = entries.iter().find(|(_, m)| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient(g.name().into()));
        }
        Ok(Gradients { entries, adjoint_converged })
    }

    /// Folds the batch statistics of a training forward pass into the running
    /// statistics.
    pub fn update_batch_norm(&mut self, cache: &ForwardCache) {
        if let (Some(bn), Some(c)) = (self.norm.as_mut(), cache.bn.as_ref()) {
            bn.update_running(c);
        }
    }

    /// Spectral norms of the geometry matrices, the largest embedding norm and
    /// the implied spectral bound `2 B^3 beta cosh(B beta)` with
    /// `B = max(|Theta_chi|, |Theta_phi|)`.
    pub fn monitor_bounds(&self, x_tilde: &Matrix) -> Result<BoundReport> {
        let p = self.geometry().ok_or_else(|| {
            Error::InvalidArgument("bound monitoring needs a parameterized Laplacian".into())
        })?;
        let q = p.with_fitted_bounds(x_tilde);
        let theta_chi_norm = spectral_norm(&p.theta_chi, 1000, 0);
        let theta_phi_norm = spectral_norm(&p.theta_phi, 1000, 0);
        let beta_hat = q.embed_bound_beta;
        let bound = spectral_bound(&q);
        Ok(BoundReport {
            theta_chi_norm,
            theta_phi_norm,
            beta_hat,
            bound,
            mu: self.mu,
            ok: self.mu > bound,
        })
    }
}

fn mean_pool(z: &Matrix, membership: &[usize]) -> Result<(Matrix, Vec<f64>)> {
    if membership.len() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} membership entries for {} nodes",
            membership.len(),
            z.nrows()
        )));
    }
    let groups = membership.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0.0; groups];
    let mut out = Matrix::zeros(groups, z.ncols());
    for (i, &m) in membership.iter().enumerate() {
        counts[m] += 1.0;
        let row = out.row(m) + z.row(i);
        out.set_row(m, &row);
    }
    for (m, &c) in counts.iter().enumerate() {
        if c > 0.0 {
            let row = out.row(m) / c;
            out.set_row(m, &row);
        }
    }
    Ok((out, counts))
}

#[cfg(test)]
mod tests;
