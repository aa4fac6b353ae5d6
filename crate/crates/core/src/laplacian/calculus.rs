//! Vertex and edge Hilbert spaces, graph gradient and graph divergence.
//!
//! Node functions are `N x c` matrices (one row per node). Arc functions are
//! `num_arcs x c` matrices aligned with the graph's arc storage.

use crate::error::{Error, Result};
use crate::graph::{DegreeVector, Graph};
use crate::linalg::Matrix;

/// Vertex measure `chi`, weighting the vertex inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexMeasure {
    pub chi: Vec<f64>,
}

impl VertexMeasure {
    pub fn uniform(n: usize) -> Self {
        Self { chi: vec![1.0; n] }
    }
}

/// Per-arc edge measure `phi` and gradient diffusivity `varphi`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeKernel {
    pub phi: Vec<f64>,
    pub varphi: Vec<f64>,
}

impl EdgeKernel {
    pub fn unit(num_arcs: usize) -> Self {
        Self {
            phi: vec![1.0; num_arcs],
            varphi: vec![1.0; num_arcs],
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// Which graph gradient to use. `Normalized` divides node values by
/// `sqrt(D_i)` before differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Standard,
    Normalized,
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `<f, g>_V = sum_i <f(i), g(i)> chi(i)`.
pub fn vertex_inner_product(f: &Matrix, g: &Matrix, m: &VertexMeasure) -> Result<f64> {
    check_same_shape(f, g)?;
    if f.nrows() != m.chi.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs measure of length {}",
            f.nrows(),
            m.chi.len()
        )));
    }
    let mut acc = 0.0;
    for (i, &chi) in m.chi.iter().enumerate() {
        acc += chi * f.row(i).dot(&g.row(i));
    }
    Ok(acc)
}

/// `<F, G>_E = 1/2 sum_i sum_j <F([i,j]), G([i,j])> phi([i,j])`.
pub fn edge_inner_product(f: &Matrix, g: &Matrix, k: &EdgeKernel) -> Result<f64> {
    check_same_shape(f, g)?;
    if f.nrows() != k.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} arc rows vs kernel of length {}",
            f.nrows(),
            k.len()
        )));
    }
    let mut acc = 0.0;
    for (a, &phi) in k.phi.iter().enumerate() {
        acc += phi * f.row(a).dot(&g.row(a));
    }
    Ok(0.5 * acc)
}

fn node_scale(g: &Graph, mode: GradientMode, deg: &DegreeVector) -> Result<Vec<f64>> {
    match mode {
        GradientMode::Standard => Ok(vec![1.0; g.num_nodes()]),
        GradientMode::Normalized => deg
            .values
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if d > 0.0 {
                    Ok(1.0 / d.sqrt())
                } else {
                    Err(Error::ZeroDegree(i))
                }
            })
            .collect(),
    }
}

/// Graph gradient `(grad f)([i,j]) = varphi([i,j]) (f(j) - f(i))`, or with
/// `f(k)/sqrt(D_k)` in place of `f(k)` for the normalized mode.
pub fn graph_gradient(
    f: &Matrix,
    g: &Graph,
    k: &EdgeKernel,
    mode: GradientMode,
    deg: &DegreeVector,
) -> Result<Matrix> {
    if f.nrows() != g.num_nodes() || k.len() != g.num_arcs() {
        return Err(Error::ShapeMismatch(
            "gradient input not aligned with graph".into(),
        ));
    }
    let scale = node_scale(g, mode, deg)?;
    let mut out = Matrix::zeros(g.num_arcs(), f.ncols());
    for (a, (i, j, _)) in g.arcs().enumerate() {
        for c in 0..f.ncols() {
            out[(a, c)] = k.varphi[a] * (scale[j] * f[(j, c)] - scale[i] * f[(i, c)]);
        }
    }
    Ok(out)
}

/// Graph divergence, the negative adjoint of [`graph_gradient`]:
/// `(div g)(i) = 1/(2 chi(i)) sum_j varphi phi (g([i,j]) - g([j,i]))`,
/// with an extra `1/sqrt(D_i)` in the normalized mode.
pub fn graph_divergence(
    gf: &Matrix,
    g: &Graph,
    m: &VertexMeasure,
    k: &EdgeKernel,
    mode: GradientMode,
    deg: &DegreeVector,
) -> Result<Matrix> {
    if gf.nrows() != g.num_arcs() || k.len() != g.num_arcs() || m.chi.len() != g.num_nodes() {
        return Err(Error::ShapeMismatch(
            "divergence input not aligned with graph".into(),
        ));
    }
    let scale = node_scale(g, mode, deg)?;
    let mut out = Matrix::zeros(g.num_nodes(), gf.ncols());
    for i in 0..g.num_nodes() {
        let pre = scale[i] / (2.0 * m.chi[i]);
        for a in g.arcs_of(i) {
            let r = g.reverse_arc(a);
            let w = k.varphi[a] * k.phi[a];
            for c in 0..gf.ncols() {
                out[(i, c)] += pre * w * (gf[(a, c)] - gf[(r, c)]);
            }
        }
    }
    Ok(out)
}
