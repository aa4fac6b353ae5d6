//! Dense helpers shared across modules.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// Row-per-node dense matrix of `f64`.
pub type Matrix = DMatrix<f64>;

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Norm of a node matrix in the vertex Hilbert space, `sqrt(sum_i chi_i |f_i|^2)`.
pub fn weighted_norm(m: &Matrix, chi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &w) in chi.iter().enumerate() {
        acc += w * m.row(i).iter().map(|v| v * v).sum::<f64>();
    }
    acc.sqrt()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest singular value of `m` by power iteration on `m^T m`.
pub fn spectral_norm(m: &Matrix, max_iter: usize, seed: u64) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = nalgebra::DVector::from_fn(m.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let n = v.norm();
    if n == 0.0 {
        return 0.0;
    }
    v /= n;
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let w = m.tr_mul(&(m * &v));
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        let next = wn.sqrt();
        v = w / wn;
        let converged = (next - sigma).abs() <= 1e-15 * next;
        sigma = next;
        if converged {
            break;
        }
    }
    (m * &v).norm()
}

/// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

/// Format a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a matrix as headerless CSV with 17 significant digits.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| fmt17(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Option<Matrix> {
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Matrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// Serde adapter storing a matrix as `{rows, cols, data}` with row-major data.
pub mod matrix_serde {
    use super::Matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let data = m.transpose().as_slice().to_vec();
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(serde::de::Error::custom("matrix data length mismatch"));
        }
        Ok(Matrix::from_row_slice(r.rows, r.cols, &r.data))
    }
}
