//! The feature-driven (neural) Laplacian and its parameter derivatives.
//!
//! For node embeddings `x_i` the three positive functions are
//!
//! ```text
//! chi(i)       = D_i tanh(|Theta_chi x_i|)
//! phi([i,j])   = tanh(|(Theta_phi Theta_chi x_i)^T (Theta_phi Theta_chi x_j)|)
//! varphi([i,j]) = sqrt(A_ij tanh(1 / (|Theta_varphi (x_i - x_j)| + eps)))
//! ```
//!
//! `chi` is floored at `eps * D_i` so that a vanishing `Theta_chi x_i` never
//! divides by zero; the floor contributes no derivative.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::calculus::{EdgeKernel, VertexMeasure};
use super::{LaplacianKind, LaplacianOperator};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{matrix_serde, spectral_norm, uniform_init, Matrix};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Learnable geometry of the neural Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    /// `h_chi x d`
    #[serde(with = "matrix_serde")]
    pub theta_chi: Matrix,
    /// `h_phi x h_chi`
    #[serde(with = "matrix_serde")]
    pub theta_phi: Matrix,
    /// `h_varphi x d`
    #[serde(with = "matrix_serde")]
    pub theta_varphi: Matrix,
    pub epsilon: f64,
    pub norm_bound_b: f64,
    pub embed_bound_beta: f64,
}

impl GeometryParams {
    pub fn new(theta_chi: Matrix, theta_phi: Matrix, theta_varphi: Matrix) -> Result<Self> {
        let p = Self {
            theta_chi,
            theta_phi,
            theta_varphi,
            epsilon: DEFAULT_EPSILON,
            norm_bound_b: 1.0,
            embed_bound_beta: 1.0,
        };
        p.validate(p.feature_dim())?;
        Ok(p)
    }

    /// Uniform `1/sqrt(fan_in)` initialization with every hidden width equal to `hidden`.
    pub fn random(feature_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            theta_chi: uniform_init(hidden, feature_dim, feature_dim, rng),
            theta_phi: uniform_init(hidden, hidden, hidden, rng),
            theta_varphi: uniform_init(hidden, feature_dim, feature_dim, rng),
            epsilon: DEFAULT_EPSILON,
            norm_bound_b: 1.0,
            embed_bound_beta: 1.0,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.theta_chi.ncols()
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if !(self.norm_bound_b > 0.0 && self.embed_bound_beta > 0.0) {
            return Err(Error::InvalidArgument("bounds B and beta must be positive".into()));
        }
        let shapes_ok = self.theta_chi.ncols() == feature_dim
            && self.theta_varphi.ncols() == feature_dim
            && self.theta_phi.ncols() == self.theta_chi.nrows();
        if !shapes_ok {
            return Err(Error::ShapeMismatch(format!(
                "geometry shapes chi {:?}, phi {:?}, varphi {:?} for feature dim {feature_dim}",
                self.theta_chi.shape(),
                self.theta_phi.shape(),
                self.theta_varphi.shape()
            )));
        }
        Ok(())
    }

    /// Copy whose `B` and `beta` are the measured parameter norms and the
    /// largest row norm of `x`, so that [`crate::spectral::spectral_bound`]
    /// applies to this `x`.
    pub fn with_fitted_bounds(&self, x: &Matrix) -> Self {
        let mut q = self.clone();
        q.norm_bound_b = spectral_norm(&q.theta_chi, 1000, 0).max(spectral_norm(&q.theta_phi, 1000, 0));
        q.embed_bound_beta = (0..x.nrows()).map(|i| x.row(i).norm()).fold(0.0, f64::max);
        q
    }
}

/// Gradients with respect to the three geometry matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryGrads {
    pub theta_chi: Matrix,
    pub theta_phi: Matrix,
    pub theta_varphi: Matrix,
}

/// Intermediate values of the coefficient computation, kept for backprop.
#[derive(Debug, Clone)]
pub struct GeometryTrace {
    /// rows `Theta_chi x_i`
    chi_embed: Matrix,
    chi_embed_norm: Vec<f64>,
    /// rows `Theta_phi Theta_chi x_i`
    phi_embed: Matrix,
    /// rows `Theta_varphi x_i`; arc differences are taken on the fly
    varphi_embed: Matrix,
    arc_inner: Vec<f64>,
    arc_dist: Vec<f64>,
    arc_tanh_inv: Vec<f64>,
    chi_clamped: Vec<bool>,
}

/// Builds the neural Laplacian for embeddings `x` (`N x d`).
pub fn build_parameterized(g: &Graph, x: &Matrix, p: &GeometryParams) -> Result<LaplacianOperator> {
    build_parameterized_traced(g, x, p).map(|(op, _)| op)
}

pub fn build_parameterized_traced(
    g: &Graph,
    x: &Matrix,
    p: &GeometryParams,
) -> Result<(LaplacianOperator, GeometryTrace)> {
    let n = g.num_nodes();
    if x.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows for {n} nodes",
            x.nrows()
        )));
    }
    p.validate(x.ncols())?;
    if let Some(row) = (0..n).find(|&i| x.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteFeature { row });
    }
    let eps = p.epsilon;
    let deg = g.degrees();

    let chi_embed = x * p.theta_chi.transpose();
    let phi_embed = &chi_embed * p.theta_phi.transpose();
    let varphi_embed = x * p.theta_varphi.transpose();

    let chi_embed_norm: Vec<f64> = (0..n).map(|i| chi_embed.row(i).norm()).collect();
    let mut chi = Vec::with_capacity(n);
    let mut chi_clamped = Vec::with_capacity(n);
    for i in 0..n {
        let d = deg[i];
        let raw = d * chi_embed_norm[i].tanh();
        let floor = if d > 0.0 { eps * d } else { eps };
        if raw < floor {
            chi.push(floor);
            chi_clamped.push(true);
        } else {
            chi.push(raw);
            chi_clamped.push(false);
        }
    }

    let m = g.num_arcs();
    let mut phi = Vec::with_capacity(m);
    let mut varphi = Vec::with_capacity(m);
    let mut arc_inner = Vec::with_capacity(m);
    let mut arc_dist = Vec::with_capacity(m);
    let mut arc_tanh_inv = Vec::with_capacity(m);
    for (i, j, a_ij) in g.arcs() {
        let inner = phi_embed.row(i).dot(&phi_embed.row(j));
        let dist = (varphi_embed.row(i) - varphi_embed.row(j)).norm();
        let t = (1.0 / (dist + eps)).tanh();
        arc_inner.push(inner);
        arc_dist.push(dist);
        arc_tanh_inv.push(t);
        phi.push(inner.abs().tanh());
        varphi.push((a_ij * t).sqrt());
    }

    let op = LaplacianOperator::from_parts(
        LaplacianKind::Parameterized,
        g.clone(),
        EdgeKernel { phi, varphi },
        VertexMeasure { chi },
        vec![1.0; n],
    );
    let trace = GeometryTrace {
        chi_embed,
        chi_embed_norm,
        phi_embed,
        varphi_embed,
        arc_inner,
        arc_dist,
        arc_tanh_inv,
        chi_clamped,
    };
    Ok((op, trace))
}

/// Pulls a per-arc coefficient gradient `d loss / d coeff_ij` (coefficients as
/// returned by [`LaplacianOperator::coefficients`]) back to the geometry
/// matrices and to the embeddings `x`.
pub fn backprop_coefficients(
    op: &LaplacianOperator,
    trace: &GeometryTrace,
    x: &Matrix,
    p: &GeometryParams,
    dcoeff: &[f64],
) -> (GeometryGrads, Matrix) {
    let g = op.graph();
    let n = g.num_nodes();
    let eps = p.epsilon;
    let chi = &op.measure().chi;
    let kernel = op.kernel();
    let deg = g.degrees();

    let mut d_chi_embed = Matrix::zeros(n, trace.chi_embed.ncols());
    let mut d_phi_embed = Matrix::zeros(n, trace.phi_embed.ncols());
    let mut d_varphi_embed = Matrix::zeros(n, trace.varphi_embed.ncols());
    let mut d_chi = vec![0.0; n];

    for (a, (i, j, a_ij)) in g.arcs().enumerate() {
        let dc = dcoeff[a];
        if dc == 0.0 {
            continue;
        }
        let phi = kernel.phi[a];
        let s = a_ij * trace.arc_tanh_inv[a];
        let coeff = s * phi / chi[i];
        let dw = dc / chi[i];
        d_chi[i] -= dc * coeff / chi[i];

        // phi = tanh(|inner|)
        let d_phi = dw * s;
        let p_ij = trace.arc_inner[a];
        let d_inner = d_phi * (1.0 - phi * phi) * sign(p_ij);
        if d_inner != 0.0 {
            for c in 0..trace.phi_embed.ncols() {
                d_phi_embed[(i, c)] += d_inner * trace.phi_embed[(j, c)];
                d_phi_embed[(j, c)] += d_inner * trace.phi_embed[(i, c)];
            }
        }

        // s = A tanh(1 / (dist + eps))
        let d_s = dw * phi;
        let t = trace.arc_tanh_inv[a];
        let dist = trace.arc_dist[a];
        let q = 1.0 / (dist + eps);
        let d_dist = d_s * a_ij * (1.0 - t * t) * (-q * q);
        if dist > 0.0 && d_dist != 0.0 {
            let k = d_dist / dist;
            for c in 0..trace.varphi_embed.ncols() {
                let b = trace.varphi_embed[(i, c)] - trace.varphi_embed[(j, c)];
                d_varphi_embed[(i, c)] += k * b;
                d_varphi_embed[(j, c)] -= k * b;
            }
        }
    }

    // chi = D tanh(|chi_embed|), unless clamped
    for i in 0..n {
        if trace.chi_clamped[i] || d_chi[i] == 0.0 {
            continue;
        }
        let norm = trace.chi_embed_norm[i];
        if norm == 0.0 {
            continue;
        }
        let t = norm.tanh();
        let d_norm = d_chi[i] * deg[i] * (1.0 - t * t);
        for c in 0..trace.chi_embed.ncols() {
            d_chi_embed[(i, c)] += d_norm * trace.chi_embed[(i, c)] / norm;
        }
    }

    // phi_embed = chi_embed Theta_phi^T
    let theta_phi = d_phi_embed.transpose() * &trace.chi_embed;
    d_chi_embed += &d_phi_embed * &p.theta_phi;
    // chi_embed = x Theta_chi^T ; varphi_embed = x Theta_varphi^T
    let theta_chi = d_chi_embed.transpose() * x;
    let theta_varphi = d_varphi_embed.transpose() * x;
    let dx = &d_chi_embed * &p.theta_chi + &d_varphi_embed * &p.theta_varphi;

    (
        GeometryGrads {
            theta_chi,
            theta_phi,
            theta_varphi,
        },
        dx,
    )
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::build_canonical;
    use crate::linalg::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_params(v: f64) -> GeometryParams {
        let m = Matrix::from_element(1, 1, v);
        GeometryParams::new(m.clone(), m.clone(), m).unwrap()
    }

    #[test]
    fn identical_neighbors_saturate_varphi() {
        let g = Graph::from_pairs(2, &[(0, 1)]).unwrap();
        let x = Matrix::from_row_slice(2, 1, &[0.3, 0.3]);
        let op = build_parameterized(&g, &x, &scalar_params(1.0)).unwrap();
        let v = op.kernel().varphi[0];
        assert!((v * v - (1e6f64).tanh()).abs() < 1e-15);
        assert!((v * v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_embeddings_zero_the_edge() {
        let g = Graph::from_pairs(2, &[(0, 1)]).unwrap();
        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let id = Matrix::identity(2, 2);
        let p = GeometryParams::new(id.clone(), id.clone(), id).unwrap();
        let op = build_parameterized(&g, &x, &p).unwrap();
        assert_eq!(op.kernel().phi, vec![0.0, 0.0]);
        assert_eq!(op.coefficients(), vec![0.0, 0.0]);
        assert_eq!(op.zeroed_arcs(), 2);
    }

    #[test]
    fn scalar_saturated_example() {
        let g = Graph::from_pairs(2, &[(0, 1)]).unwrap();
        let x = Matrix::from_row_slice(2, 1, &[1000.0, 1000.0]);
        let op = build_parameterized(&g, &x, &scalar_params(1.0)).unwrap();
        let expected = (1e6f64).tanh() * (1e6f64).tanh() / (1000.0f64).tanh();
        let c = op.coefficients()[0];
        assert!((c - expected).abs() < 1e-15);
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_geometry_reproduces_random_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((rng.random_range(0..i), i, rng.random_range(0.5..2.0)));
        }
        let g = Graph::from_edges(n, &edges).unwrap();
        // one shared large feature direction saturates chi and phi; identical
        // varphi embeddings saturate tanh(1/eps)
        let x = Matrix::from_fn(n, 2, |_, c| if c == 0 { 50.0 } else { 0.0 });
        let theta_varphi = Matrix::zeros(1, 2);
        let theta = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = GeometryParams::new(theta.clone(), Matrix::identity(1, 1), theta_varphi).unwrap();
        let op = build_parameterized(&g, &x, &p).unwrap();
        let rw = build_canonical(&g, LaplacianKind::RandomWalk).unwrap();
        for (a, b) in op.coefficients().iter().zip(rw.coefficients()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn chi_floor_applies_to_zero_embeddings() {
        let g = Graph::from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let x = Matrix::zeros(3, 1);
        let op = build_parameterized(&g, &x, &scalar_params(1.0)).unwrap();
        assert_eq!(op.measure().chi, vec![1e-6, 2e-6, 1e-6]);
        assert!(op.apply(&Matrix::from_element(3, 1, 1.0)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Graph::from_pairs(2, &[(0, 1)]).unwrap();
        let p = scalar_params(1.0);
        assert!(matches!(
            build_parameterized(&g, &Matrix::zeros(3, 1), &p),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            build_parameterized(&g, &Matrix::zeros(2, 2), &p),
            Err(Error::ShapeMismatch(_))
        ));
        let x = Matrix::from_row_slice(2, 1, &[1.0, f64::INFINITY]);
        assert!(matches!(
            build_parameterized(&g, &x, &p),
            Err(Error::NonFiniteFeature { row: 1 })
        ));
    }

    #[test]
    fn symmetric_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Graph::from_pairs(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]).unwrap();
        let x = Matrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let p = GeometryParams::random(3, 4, &mut rng);
        let op = build_parameterized(&g, &x, &p).unwrap();
        for a in 0..g.num_arcs() {
            let r = g.reverse_arc(a);
            assert_eq!(op.kernel().phi[a], op.kernel().phi[r]);
            assert_eq!(op.kernel().varphi[a], op.kernel().varphi[r]);
        }
    }

    /// Finite-difference check of the coefficient pull-back against a random
    /// linear functional `L = sum_a r_a coeff_a`.
    #[test]
    fn coefficient_backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = Graph::from_pairs(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)])
            .unwrap();
        let x = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let p = GeometryParams::random(3, 4, &mut rng);
        let r: Vec<f64> = (0..g.num_arcs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |x: &Matrix, p: &GeometryParams| -> f64 {
            let op = build_parameterized(&g, x, p).unwrap();
            op.coefficients().iter().zip(&r).map(|(c, w)| c * w).sum()
        };
        let (op, trace) = build_parameterized_traced(&g, &x, &p).unwrap();
        let (grads, dx) = backprop_coefficients(&op, &trace, &x, &p, &r);
        let h = 1e-6;
        let check = |analytic: f64, fd: f64| {
            assert!((analytic - fd).abs() <= 1e-6 * analytic.abs().max(1.0), "{analytic} vs {fd}");
        };
        for idx in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[idx] += h;
            xm[idx] -= h;
            check(dx[idx], (objective(&xp, &p) - objective(&xm, &p)) / (2.0 * h));
        }
        for which in 0..3 {
            let analytic = match which {
                0 => &grads.theta_chi,
                1 => &grads.theta_phi,
                _ => &grads.theta_varphi,
            };
            for idx in 0..analytic.len() {
                let perturb = |delta: f64| {
                    let mut q = p.clone();
                    match which {
                        0 => q.theta_chi[idx] += delta,
                        1 => q.theta_phi[idx] += delta,
                        _ => q.theta_varphi[idx] += delta,
                    }
                    objective(&x, &q)
                };
                check(analytic[idx], (perturb(h) - perturb(-h)) / (2.0 * h));
            }
        }
        assert!(max_abs_diff(&dx, &dx) == 0.0);
    }
}
