//! Dominant eigenvalue of a Laplacian and well-posedness of the implicit layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::laplacian::{GeometryParams, LaplacianKind, LaplacianOperator};
use crate::linalg::Matrix;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration `v <- Delta v` with the Rayleigh quotient taken in the
/// `chi`-weighted inner product, where `Delta` is self-adjoint and PSD.
///
/// Stops once the eigen-residual `|Delta v - lambda v|_chi` drops below
/// `sqrt(tol) * lambda`, which bounds the Rayleigh error by roughly `tol`.
pub fn lambda_max(op: &LaplacianOperator, tol: f64, max_iter: usize, seed: u64) -> EigenEstimate {
    let n = op.num_nodes();
    if n == 0 {
        return EigenEstimate { value: 0.0, iterations: 0, converged: true };
    }
    if !op.graph().is_connected() {
        log::warn!("lambda_max on a disconnected graph");
    }
    let chi = &op.measure().chi;
    let wnorm = |v: &Matrix| crate::linalg::weighted_norm(v, chi);
    let winner = |a: &Matrix, b: &Matrix| -> f64 {
        (0..n).map(|i| chi[i] * a[(i, 0)] * b[(i, 0)]).sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Matrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let nv = wnorm(&v);
    v /= nv;
    let mut lambda = 0.0;
    let threshold = tol.sqrt();
    for it in 1..=max_iter {
        let w = op.apply(&v).expect("shape checked");
        lambda = winner(&v, &w);
        let resid = wnorm(&(&w - &v * lambda));
        let wn = wnorm(&w);
        if wn == 0.0 || !wn.is_finite() {
            // v in the kernel: every eigenvalue reachable from v is zero
            return EigenEstimate { value: 0.0, iterations: it, converged: wn == 0.0 };
        }
        if resid <= threshold * lambda.abs() {
            return EigenEstimate { value: lambda, iterations: it, converged: true };
        }
        v = w / wn;
    }
    log::warn!("lambda_max did not converge in {max_iter} iterations");
    EigenEstimate { value: lambda, iterations: max_iter, converged: false }
}

/// Upper bound `2 B^3 beta cosh(B beta)` on the spectrum of the neural Laplacian.
pub fn spectral_bound(p: &GeometryParams) -> f64 {
    let (b, beta) = (p.norm_bound_b, p.embed_bound_beta);
    2.0 * b.powi(3) * beta * (b * beta).cosh()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellPosednessReport {
    pub lambda_max_estimate: f64,
    pub analytic_bound: f64,
    pub mu: f64,
    pub well_posed: bool,
    pub margin: f64,
}

/// Compares `mu` with the estimated `lambda_max`. The analytic bound is 2 for
/// the random walk Laplacian, the geometry bound when parameters are given,
/// and the estimate itself otherwise.
pub fn certify(op: &LaplacianOperator, mu: f64, p: Option<&GeometryParams>) -> WellPosednessReport {
    let est = lambda_max(op, DEFAULT_TOL, DEFAULT_MAX_ITER, DEFAULT_SEED).value;
    let analytic_bound = match (op.kind(), p) {
        (LaplacianKind::RandomWalk, _) => 2.0,
        (LaplacianKind::Parameterized, Some(p)) => spectral_bound(p),
        _ => est,
    };
    WellPosednessReport {
        lambda_max_estimate: est,
        analytic_bound,
        mu,
        well_posed: mu > est,
        margin: mu - est,
    }
}
