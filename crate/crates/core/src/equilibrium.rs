//! Fixed-point solvers for `Z = X - (1/mu) Delta Z` and for the constrained
//! system `f = Y' + C f`, plus a dense direct solve used as an oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::laplacian::{LaplacianOperator, DEFAULT_DENSE_CAP};
use crate::linalg::{frobenius, Matrix};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
const GAMMA_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    #[serde(serialize_with = "rows_ser", deserialize_with = "rows_de")]
    pub z_star: Matrix,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub z_star_norm: f64,
}

fn rows_ser<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    crate::linalg::to_rows(m).serialize(s)
}

fn rows_de<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Matrix, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    let ncols = rows.first().map_or(0, |r| r.len());
    crate::linalg::from_rows(&rows, ncols)
        .ok_or_else(|| serde::de::Error::custom("ragged matrix rows"))
}

impl EquilibriumResult {
    /// Residual history as `iteration,residual` CSV.
    pub fn residual_csv(&self) -> String {
        let mut out = String::from("iteration,residual\n");
        for (t, r) in self.residual_history.iter().enumerate() {
            out.push_str(&format!("{},{}\n", t + 1, crate::linalg::fmt17(*r)));
        }
        out
    }
}

/// Runs `f <- step(f)` from `f0` until the Frobenius change is at most `tol`.
fn fixed_point(
    f0: Matrix,
    tol: f64,
    max_iter: usize,
    mut step: impl FnMut(&Matrix) -> Result<Matrix>,
) -> Result<EquilibriumResult> {
    let mut f = f0;
    let mut history = Vec::new();
    let mut converged = false;
    for t in 1..=max_iter.max(1) {
        let next = step(&f)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate { iteration: t });
        }
        let r = frobenius(&(&next - &f));
        history.push(r);
        f = next;
        if r <= tol {
            converged = true;
            break;
        }
    }
    if !converged && history.len() > 1 && history[history.len() - 1] > history[0] {
        log::warn!("fixed-point residuals are growing; the system may not be well-posed");
    }
    Ok(EquilibriumResult {
        z_star_norm: frobenius(&f),
        iterations: history.len(),
        z_star: f,
        residual_history: history,
        converged,
    })
}

fn check_rows(op: &LaplacianOperator, x: &Matrix) -> Result<()> {
    if x.nrows() != op.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows for {} nodes",
            x.nrows(),
            op.num_nodes()
        )));
    }
    Ok(())
}

/// Iterates `Z <- X - (1/mu) Delta Z` from `Z = 0`.
pub fn solve_implicit_layer(
    op: &LaplacianOperator,
    x_tilde: &Matrix,
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumResult> {
    check_rows(op, x_tilde)?;
    let z0 = Matrix::zeros(x_tilde.nrows(), x_tilde.ncols());
    fixed_point(z0, tol, max_iter, |z| Ok(x_tilde - op.apply(z)? / mu))
}

/// The sequence `Z^0 = 0, Z^1, Z^2, ...` of the implicit-layer iteration.
pub struct ImplicitIterates<'a> {
    op: &'a LaplacianOperator,
    x: &'a Matrix,
    mu: f64,
    z: Option<Matrix>,
}

impl Iterator for ImplicitIterates<'_> {
    type Item = Matrix;
    fn next(&mut self) -> Option<Matrix> {
        let next = match &self.z {
            None => Matrix::zeros(self.x.nrows(), self.x.ncols()),
            Some(z) => self.x - self.op.apply(z).ok()? / self.mu,
        };
        self.z = Some(next.clone());
        Some(next)
    }
}

pub fn implicit_iterates<'a>(
    op: &'a LaplacianOperator,
    x_tilde: &'a Matrix,
    mu: f64,
) -> Result<ImplicitIterates<'a>> {
    check_rows(op, x_tilde)?;
    Ok(ImplicitIterates { op, x: x_tilde, mu, z: None })
}

/// Dense LU solve of `(I + Delta/mu) Z = X`.
pub fn solve_direct(op: &LaplacianOperator, x_tilde: &Matrix, mu: f64) -> Result<Matrix> {
    solve_direct_with_cap(op, x_tilde, mu, DEFAULT_DENSE_CAP)
}

pub fn solve_direct_with_cap(
    op: &LaplacianOperator,
    x_tilde: &Matrix,
    mu: f64,
    cap: usize,
) -> Result<Matrix> {
    check_rows(op, x_tilde)?;
    let n = op.num_nodes();
    let m = Matrix::identity(n, n) + op.to_dense_with_cap(cap)? / mu;
    let z = m.lu().solve(x_tilde).ok_or(Error::Singular)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(z)
}

/// Constrained nodes `I` with their targets, padded to all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub constrained_nodes: Vec<usize>,
    pub targets: Matrix,
    pub indicator: Vec<bool>,
    pub padded_targets: Matrix,
}

impl ConstraintSet {
    /// `targets` has one row per entry of `nodes`, in the same order.
    pub fn new(num_nodes: usize, nodes: &[usize], targets: Matrix) -> Result<Self> {
        if targets.nrows() != nodes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} target rows for {} constrained nodes",
                targets.nrows(),
                nodes.len()
            )));
        }
        let mut indicator = vec![false; num_nodes];
        let mut padded = Matrix::zeros(num_nodes, targets.ncols());
        for (r, &i) in nodes.iter().enumerate() {
            if i >= num_nodes {
                return Err(Error::IndexOutOfRange { index: i, num_nodes });
            }
            if indicator[i] {
                return Err(Error::InvalidArgument(format!("node {i} constrained twice")));
            }
            indicator[i] = true;
            padded.set_row(i, &targets.row(r));
        }
        Ok(Self {
            constrained_nodes: nodes.to_vec(),
            targets,
            indicator,
            padded_targets: padded,
        })
    }

    /// Every node constrained, `Y' = targets`.
    pub fn all(targets: Matrix) -> Self {
        let nodes: Vec<usize> = (0..targets.nrows()).collect();
        Self::new(targets.nrows(), &nodes, targets).expect("consistent by construction")
    }

    /// No constrained nodes; `Y' = 0` with `cols` columns.
    pub fn none(num_nodes: usize, cols: usize) -> Self {
        Self::new(num_nodes, &[], Matrix::zeros(0, cols)).expect("consistent by construction")
    }
}

/// Row-stochastic diffusion `P_ij = varphi^2 phi / D_hat_i`.
#[derive(Debug, Clone)]
pub struct MarkovMatrix {
    graph: Graph,
    values: Vec<f64>,
    dhat: Vec<f64>,
}

impl MarkovMatrix {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn arc_values(&self) -> &[f64] {
        &self.values
    }

    pub fn dhat(&self) -> &[f64] {
        &self.dhat
    }

    pub fn apply(&self, f: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(f.nrows(), f.ncols());
        let nbr = self.graph.neighbor_ids();
        for i in 0..self.graph.num_nodes() {
            for a in self.graph.arcs_of(i) {
                let p = self.values[a];
                for c in 0..f.ncols() {
                    out[(i, c)] += p * f[(nbr[a], c)];
                }
            }
        }
        out
    }

    pub fn apply_transpose(&self, f: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(f.nrows(), f.ncols());
        for (a, (i, j, _)) in self.graph.arcs().enumerate() {
            let p = self.values[a];
            for c in 0..f.ncols() {
                out[(j, c)] += p * f[(i, c)];
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.graph.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for (a, (i, j, _)) in self.graph.arcs().enumerate() {
            m[(i, j)] = self.values[a];
        }
        m
    }
}

pub fn build_markov(op: &LaplacianOperator) -> Result<MarkovMatrix> {
    let dhat = op.dhat().to_vec();
    if let Some(i) = dhat.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedNode(i));
    }
    let g = op.graph();
    let w = op.arc_weights();
    let values = g.arcs().enumerate().map(|(a, (i, _, _))| w[a] / dhat[i]).collect();
    Ok(MarkovMatrix { graph: g.clone(), values, dhat })
}

/// `pi_i = D_hat_i / sum_j D_hat_j`.
pub fn stationary_distribution(markov: &MarkovMatrix) -> Vec<f64> {
    let total: f64 = markov.dhat.iter().sum();
    markov.dhat.iter().map(|d| d / total).collect()
}

/// `f = Y' + C f` with `C_i = -(1/mu) Delta_i` on constrained rows and `P_i`
/// elsewhere.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    op: LaplacianOperator,
    markov: MarkovMatrix,
    indicator: Vec<bool>,
    y_prime: Matrix,
    mu: f64,
}

pub fn build_constrained_system(
    op: &LaplacianOperator,
    markov: &MarkovMatrix,
    cs: &ConstraintSet,
    mu: f64,
) -> Result<ConstrainedSystem> {
    let n = op.num_nodes();
    if markov.graph.num_nodes() != n || cs.indicator.len() != n || cs.padded_targets.nrows() != n
    {
        return Err(Error::ShapeMismatch(
            "operator, Markov matrix and constraints disagree on node count".into(),
        ));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    Ok(ConstrainedSystem {
        op: op.clone(),
        markov: markov.clone(),
        indicator: cs.indicator.clone(),
        y_prime: cs.padded_targets.clone(),
        mu,
    })
}

impl ConstrainedSystem {
    pub fn y_prime(&self) -> &Matrix {
        &self.y_prime
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn apply_c(&self, f: &Matrix) -> Result<Matrix> {
        let lap = self.op.apply(f)?;
        let pf = self.markov.apply(f);
        let mut out = pf;
        for (i, &constrained) in self.indicator.iter().enumerate() {
            if constrained {
                let row = lap.row(i) * (-1.0 / self.mu);
                out.set_row(i, &row);
            }
        }
        Ok(out)
    }

    pub fn apply_c_transpose(&self, f: &Matrix) -> Result<Matrix> {
        let mut masked_c = f.clone();
        let mut masked_u = f.clone();
        for (i, &constrained) in self.indicator.iter().enumerate() {
            if constrained {
                masked_u.row_mut(i).fill(0.0);
            } else {
                masked_c.row_mut(i).fill(0.0);
            }
        }
        Ok(self.markov.apply_transpose(&masked_u) - self.op.apply_transpose(&masked_c)? / self.mu)
    }

    pub fn to_dense(&self) -> Result<Matrix> {
        let n = self.op.num_nodes();
        if n > DEFAULT_DENSE_CAP {
            return Err(Error::TooLarge { num_nodes: n, cap: DEFAULT_DENSE_CAP });
        }
        self.apply_c(&Matrix::identity(n, n))
    }

    /// Largest singular value of `C` from power iteration on `C^T C`, run
    /// until the estimate changes by less than one part in 1e12.
    pub fn gamma_max(&self) -> f64 {
        let n = self.op.num_nodes();
        if n == 0 {
            return 0.0;
        }
        let mut v = Matrix::from_fn(n, 1, |i, _| 1.0 + (i % 7) as f64 / 7.0);
        v /= v.norm();
        let mut sigma: f64 = 0.0;
        for _ in 0..GAMMA_MAX_ITER {
            let w = self
                .apply_c_transpose(&self.apply_c(&v).expect("aligned"))
                .expect("aligned");
            let wn = w.norm();
            if wn == 0.0 {
                return 0.0;
            }
            let next = wn.sqrt();
            let done = (next - sigma).abs() <= 1e-12 * next;
            sigma = next;
            v = w / wn;
            if done {
                break;
            }
        }
        sigma
    }
}

/// Iterates `f <- Y' + C f` from `f0` (zero when absent).
///
/// When `gamma = gamma_max(C) < 1` the iteration also waits for the
/// a-posteriori bound `gamma / (1 - gamma) * |f^{t+1} - f^t|` to reach `tol`,
/// so a converged result lies within `tol` (Frobenius) of the equilibrium.
pub fn solve_constrained(
    sys: &ConstrainedSystem,
    tol: f64,
    max_iter: usize,
    f0: Option<&Matrix>,
) -> Result<EquilibriumResult> {
    let start = match f0 {
        Some(f) if f.shape() != sys.y_prime.shape() => {
            return Err(Error::ShapeMismatch(format!(
                "initial state {:?} vs targets {:?}",
                f.shape(),
                sys.y_prime.shape()
            )))
        }
        Some(f) => f.clone(),
        None => Matrix::zeros(sys.y_prime.nrows(), sys.y_prime.ncols()),
    };
    let gamma = sys.gamma_max();
    let step_tol = if gamma >= 1.0 {
        log::warn!("gamma_max(C) = {gamma:.6} >= 1; the equilibrium may depend on the start");
        tol
    } else if gamma > 0.5 {
        tol * (1.0 - gamma) / gamma
    } else {
        tol
    };
    fixed_point(start, step_tol, max_iter, |f| Ok(&sys.y_prime + sys.apply_c(f)?))
}
