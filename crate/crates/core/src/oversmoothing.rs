//! Diagnostics for the two over-smoothing conditions: feature independence of
//! equilibria under a fixed geometry, and collapse of unconstrained diffusion
//! onto the stationary average.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    build_constrained_system, build_markov, solve_constrained, stationary_distribution,
    ConstraintSet, EquilibriumResult, MarkovMatrix,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::laplacian::{build_canonical, build_parameterized, GeometryParams, LaplacianKind};
use crate::linalg::{fmt17, matrix_serde, max_abs_diff, Matrix};

/// Iteration cap of the constrained solves inside [`check_ost`].
pub const OST_MAX_ITER: usize = 100_000;

/// Geometry used by [`check_ost`].
#[derive(Debug, Clone)]
pub enum OstGeometry {
    /// Feature-independent canonical Laplacian.
    Fixed(LaplacianKind),
    /// Neural Laplacian rebuilt from each feature matrix.
    Parameterized(GeometryParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OstReport {
    #[serde(with = "matrix_serde")]
    pub equilibrium_a: Matrix,
    #[serde(with = "matrix_serde")]
    pub equilibrium_b: Matrix,
    pub max_abs_difference: f64,
    pub feature_independent: bool,
    pub converged: bool,
}

/// Solves `f = Y' + C f` starting from `X_a` and from `X_b` (the identity map
/// from features to initial states) and compares the equilibria.
pub fn check_ost(
    g: &Graph,
    geometry: &OstGeometry,
    cs: &ConstraintSet,
    x_a: &Matrix,
    x_b: &Matrix,
    mu: f64,
    tol: f64,
) -> Result<OstReport> {
    let solve = |x: &Matrix| -> Result<EquilibriumResult> {
        let op = match geometry {
            OstGeometry::Fixed(LaplacianKind::Parameterized) => {
                return Err(Error::InvalidArgument(
                    "fixed OST geometry must be a canonical kind".into(),
                ))
            }
            OstGeometry::Fixed(kind) => build_canonical(g, *kind)?,
            OstGeometry::Parameterized(p) => build_parameterized(g, x, p)?,
        };
        let markov = build_markov(&op)?;
        let sys = build_constrained_system(&op, &markov, cs, mu)?;
        solve_constrained(&sys, tol, OST_MAX_ITER, Some(x))
    };
    let a = solve(x_a)?;
    let b = solve(x_b)?;
    let diff = max_abs_diff(&a.z_star, &b.z_star);
    Ok(OstReport {
        max_abs_difference: diff,
        feature_independent: diff <= 2.0 * tol,
        converged: a.converged && b.converged,
        equilibrium_a: a.z_star,
        equilibrium_b: b.z_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsiReport {
    #[serde(with = "matrix_serde")]
    pub limit_rows: Matrix,
    pub predicted_row: Vec<f64>,
    pub max_row_deviation: f64,
    pub rows_identical: bool,
    pub iterations: usize,
}

/// Iterates `f <- P f` until every column's spread `max - min` is at most
/// `tol`, then compares every row with `(pi f0)^T`.
///
/// Since `pi P = pi`, `pi f^t` is the same convex combination of rows at every
/// step, so a spread below `tol` bounds the deviation from the prediction too.
pub fn check_osi(markov: &MarkovMatrix, f0: &Matrix, tol: f64, max_iter: usize) -> Result<OsiReport> {
    let g = markov.graph();
    if f0.nrows() != g.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows for {} nodes",
            f0.nrows(),
            g.num_nodes()
        )));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    if g.is_bipartite() {
        return Err(Error::BipartiteGraph);
    }
    let pi = stationary_distribution(markov);
    let predicted: Vec<f64> = (0..f0.ncols())
        .map(|c| (0..f0.nrows()).map(|i| pi[i] * f0[(i, c)]).sum())
        .collect();
    let mut f = f0.clone();
    let mut iterations = 0;
    while column_spread(&f) > tol && iterations < max_iter {
        f = markov.apply(&f);
        iterations += 1;
    }
    let mut dev: f64 = 0.0;
    for i in 0..f.nrows() {
        for (c, p) in predicted.iter().enumerate() {
            dev = dev.max((f[(i, c)] - p).abs());
        }
    }
    Ok(OsiReport {
        limit_rows: f,
        predicted_row: predicted,
        max_row_deviation: dev,
        rows_identical: dev <= tol,
        iterations,
    })
}

fn column_spread(f: &Matrix) -> f64 {
    (0..f.ncols())
        .map(|c| f.column(c).max() - f.column(c).min())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub energy: f64,
    pub variance: f64,
}

/// Energy and row variance of `P^t f0` for `t = 0..=steps`. The energy is the
/// Dirichlet energy with the graph's own weights.
pub fn smoothing_trajectory(markov: &MarkovMatrix, f0: &Matrix, steps: usize) -> Vec<TrajectoryPoint> {
    let g = markov.graph();
    let mut f = f0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        out.push(TrajectoryPoint {
            step,
            energy: edge_energy(g, &f),
            variance: row_variance(&f),
        });
        if step < steps {
            f = markov.apply(&f);
        }
    }
    out
}

fn edge_energy(g: &Graph, f: &Matrix) -> f64 {
    let mut acc = 0.0;
    for (i, j, w) in g.arcs() {
        acc += w * (f.row(j) - f.row(i)).norm_squared();
    }
    0.5 * acc
}

/// Mean squared distance of the rows from their mean row.
pub fn row_variance(f: &Matrix) -> f64 {
    let n = f.nrows();
    if n == 0 {
        return 0.0;
    }
    let mean = f.row_mean();
    (0..n).map(|i| (f.row(i) - &mean).norm_squared()).sum::<f64>() / n as f64
}

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from("step,energy,variance\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.step, fmt17(p.energy), fmt17(p.variance)));
    }
    out
}
