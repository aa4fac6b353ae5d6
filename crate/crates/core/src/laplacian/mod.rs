//! Graph Laplacian operators `Delta = -div grad` and Dirichlet energies.
//!
//! Every operator is stored in the symmetric-weight form
//!
//! ```text
//! (Delta f)(i) = t_i / chi(i) * sum_j w_ij (t_i f(i) - t_j f(j))
//! ```
//!
//! with per-arc weights `w_ij = varphi([i,j])^2 phi([i,j])`, vertex measure
//! `chi` and node scaling `t` (`t = 1` except for the normalized Laplacian,
//! where `t_i = 1/sqrt(D_i)`). Because `w` is symmetric, every operator is
//! self-adjoint and positive semi-definite with respect to `<., .>_V`.

mod calculus;
mod geometry;

pub use calculus::{
    edge_inner_product, graph_divergence, graph_gradient, vertex_inner_product, EdgeKernel,
    GradientMode, VertexMeasure,
};
pub use geometry::{
    backprop_coefficients, build_parameterized, build_parameterized_traced, GeometryGrads,
    GeometryParams, GeometryTrace,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

/// Default node-count cap for [`LaplacianOperator::to_dense`].
pub const DEFAULT_DENSE_CAP: usize = 2000;

// below this many matrix entries, columns are processed sequentially
const PARALLEL_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    Unnormalized,
    RandomWalk,
    Normalized,
    Parameterized,
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unnormalized" | "un" => Ok(Self::Unnormalized),
            "random_walk" | "random-walk" | "rw" => Ok(Self::RandomWalk),
            "normalized" | "n" => Ok(Self::Normalized),
            "parameterized" | "neural" => Ok(Self::Parameterized),
            other => Err(Error::InvalidArgument(format!("unknown Laplacian kind '{other}'"))),
        }
    }
}

/// A materialized Laplacian over a fixed graph.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    kind: LaplacianKind,
    graph: Graph,
    weight: Vec<f64>,
    chi: VertexMeasure,
    kernel: EdgeKernel,
    scale: Vec<f64>,
    dhat: Vec<f64>,
}

impl LaplacianOperator {
    pub(crate) fn from_parts(
        kind: LaplacianKind,
        graph: Graph,
        kernel: EdgeKernel,
        chi: VertexMeasure,
        scale: Vec<f64>,
    ) -> Self {
        let weight: Vec<f64> = kernel
            .varphi
            .iter()
            .zip(&kernel.phi)
            .map(|(v, p)| v * v * p)
            .collect();
        let dhat = (0..graph.num_nodes())
            .map(|i| graph.arcs_of(i).map(|a| weight[a]).sum())
            .collect();
        Self {
            kind,
            graph,
            weight,
            chi,
            kernel,
            scale,
            dhat,
        }
    }

    /// Canonical Laplacians. `phi = 1` and `varphi = sqrt(A_ij)` realise
    /// `varphi^2 phi = A_ij`; the vertex measure is `1` (unnormalized and
    /// normalized) or `D_i` (random walk).
    pub fn canonical(g: &Graph, kind: LaplacianKind) -> Result<Self> {
        let n = g.num_nodes();
        let deg = g.degrees();
        let kernel = EdgeKernel {
            phi: vec![1.0; g.num_arcs()],
            varphi: g.edge_weights().iter().map(|w| w.sqrt()).collect(),
        };
        let require_positive = || -> Result<()> {
            match deg.values.iter().position(|&d| !(d > 0.0)) {
                Some(i) => Err(Error::ZeroDegree(i)),
                None => Ok(()),
            }
        };
        let (chi, scale) = match kind {
            LaplacianKind::Unnormalized => (VertexMeasure::uniform(n), vec![1.0; n]),
            LaplacianKind::RandomWalk => {
                require_positive()?;
                (VertexMeasure { chi: deg.values.clone() }, vec![1.0; n])
            }
            LaplacianKind::Normalized => {
                require_positive()?;
                let scale = deg.values.iter().map(|d| 1.0 / d.sqrt()).collect();
                (VertexMeasure::uniform(n), scale)
            }
            LaplacianKind::Parameterized => {
                return Err(Error::InvalidArgument(
                    "parameterized Laplacians are built with build_parameterized".into(),
                ))
            }
        };
        Ok(Self::from_parts(kind, g.clone(), kernel, chi, scale))
    }

    /// Random walk Laplacian whose isolated nodes get a zero row (measure 1)
    /// instead of an error. Used by the model, where inputs may contain
    /// isolated nodes.
    pub fn random_walk_allowing_isolated(g: &Graph) -> Self {
        let deg = g.degrees();
        let chi = deg.values.iter().map(|&d| if d > 0.0 { d } else { 1.0 }).collect();
        let kernel = EdgeKernel {
            phi: vec![1.0; g.num_arcs()],
            varphi: g.edge_weights().iter().map(|w| w.sqrt()).collect(),
        };
        let n = g.num_nodes();
        Self::from_parts(LaplacianKind::RandomWalk, g.clone(), kernel, VertexMeasure { chi }, vec![1.0; n])
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn measure(&self) -> &VertexMeasure {
        &self.chi
    }

    pub fn kernel(&self) -> &EdgeKernel {
        &self.kernel
    }

    /// Per-arc `varphi^2 phi`.
    pub fn arc_weights(&self) -> &[f64] {
        &self.weight
    }

    /// `D_hat_i = sum_k varphi([i,k])^2 phi([i,k])`.
    pub fn dhat(&self) -> &[f64] {
        &self.dhat
    }

    pub fn gradient_mode(&self) -> GradientMode {
        match self.kind {
            LaplacianKind::Normalized => GradientMode::Normalized,
            _ => GradientMode::Standard,
        }
    }

    /// Off-diagonal coefficient of every arc: the factor multiplying `-f(j)`
    /// in row `i`. For the standard forms this is `varphi^2 phi / chi(i)`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.graph
            .arcs()
            .enumerate()
            .map(|(a, (i, j, _))| self.scale[i] * self.scale[j] * self.weight[a] / self.chi.chi[i])
            .collect()
    }

    /// Number of arcs whose coefficient vanished (e.g. orthogonal embeddings
    /// driving `phi` to zero).
    pub fn zeroed_arcs(&self) -> usize {
        self.weight.iter().filter(|&&w| w == 0.0).count()
    }

    fn check_rows(&self, f: &Matrix) -> Result<()> {
        if f.nrows() != self.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "operator on {} nodes applied to {} rows",
                self.num_nodes(),
                f.nrows()
            )));
        }
        Ok(())
    }

    fn apply_column(&self, x: &[f64], out: &mut [f64]) {
        let g = &self.graph;
        let nbr = g.neighbor_ids();
        for i in 0..g.num_nodes() {
            let ti = self.scale[i];
            let xi = ti * x[i];
            let mut acc = 0.0;
            for a in g.arcs_of(i) {
                let j = nbr[a];
                acc += self.weight[a] * (xi - self.scale[j] * x[j]);
            }
            out[i] = ti * acc / self.chi.chi[i];
        }
    }

    fn apply_transpose_column(&self, x: &[f64], out: &mut [f64]) {
        let g = &self.graph;
        let nbr = g.neighbor_ids();
        let y: Vec<f64> = (0..g.num_nodes())
            .map(|i| self.scale[i] * x[i] / self.chi.chi[i])
            .collect();
        for i in 0..g.num_nodes() {
            let mut acc = 0.0;
            for a in g.arcs_of(i) {
                acc += self.weight[a] * (y[i] - y[nbr[a]]);
            }
            out[i] = self.scale[i] * acc;
        }
    }

    fn columnwise(&self, f: &Matrix, kernel: impl Fn(&[f64], &mut [f64]) + Sync) -> Matrix {
        let n = f.nrows();
        let mut out = Matrix::zeros(n, f.ncols());
        if n == 0 {
            return out;
        }
        let input = f.as_slice();
        let output = out.as_mut_slice();
        if n * f.ncols() >= PARALLEL_THRESHOLD {
            output
                .par_chunks_mut(n)
                .zip(input.par_chunks(n))
                .for_each(|(o, x)| kernel(x, o));
        } else {
            for (o, x) in output.chunks_mut(n).zip(input.chunks(n)) {
                kernel(x, o);
            }
        }
        out
    }

    /// `Delta F`, column by column.
    pub fn apply(&self, f: &Matrix) -> Result<Matrix> {
        self.check_rows(f)?;
        Ok(self.columnwise(f, |x, o| self.apply_column(x, o)))
    }

    /// `Delta^T F` in the Euclidean sense (differs from `apply` when `chi` is
    /// not constant, e.g. for the random-walk Laplacian).
    pub fn apply_transpose(&self, f: &Matrix) -> Result<Matrix> {
        self.check_rows(f)?;
        Ok(self.columnwise(f, |x, o| self.apply_transpose_column(x, o)))
    }

    pub fn to_dense(&self) -> Result<Matrix> {
        self.to_dense_with_cap(DEFAULT_DENSE_CAP)
    }

    /// Dense matrix whose column `k` is `apply(e_k)`.
    pub fn to_dense_with_cap(&self, cap: usize) -> Result<Matrix> {
        let n = self.num_nodes();
        if n > cap {
            return Err(Error::TooLarge { num_nodes: n, cap });
        }
        self.apply(&Matrix::identity(n, n))
    }

    /// Dirichlet energy `S(f) = 1/2 sum_i sum_j w_ij |t_j f(j) - t_i f(i)|^2`.
    pub fn dirichlet_energy(&self, f: &Matrix) -> Result<f64> {
        self.check_rows(f)?;
        let mut acc = 0.0;
        for (a, (i, j, _)) in self.graph.arcs().enumerate() {
            let mut sq = 0.0;
            for c in 0..f.ncols() {
                let d = self.scale[j] * f[(j, c)] - self.scale[i] * f[(i, c)];
                sq += d * d;
            }
            acc += self.weight[a] * sq;
        }
        Ok(0.5 * acc)
    }

    /// `dS/df |_i = 2 chi(i) (Delta f)(i)`.
    pub fn dirichlet_energy_gradient(&self, f: &Matrix) -> Result<Matrix> {
        let mut out = self.apply(f)?;
        for i in 0..self.num_nodes() {
            let s = 2.0 * self.chi.chi[i];
            out.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        Ok(out)
    }

    /// Per-arc coefficients as `i,j,coeff` CSV lines with a header.
    pub fn coefficients_csv(&self) -> String {
        let mut out = String::from("i,j,coeff\n");
        for ((i, j, _), c) in self.graph.arcs().zip(self.coefficients()) {
            out.push_str(&format!("{i},{j},{}\n", crate::linalg::fmt17(c)));
        }
        out
    }
}

/// Builds one of the fixed Laplacians.
pub fn build_canonical(g: &Graph, kind: LaplacianKind) -> Result<LaplacianOperator> {
    LaplacianOperator::canonical(g, kind)
}
