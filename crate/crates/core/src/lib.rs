//! Implicit graph neural diffusion built on parameterized graph Laplacians.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] holds the immutable compressed-row graph every operator works on.
//! * [`laplacian`] implements vertex/edge inner products, graph gradient and
//!   divergence, the canonical Laplacians and the feature-driven neural
//!   Laplacian, together with Dirichlet energies.
//! * [`spectral`] estimates dominant eigenvalues and certifies well-posedness
//!   of the implicit layer.
//! * [`equilibrium`] solves `Z = X - (1/mu) L Z` and the constrained system
//!   `f = Y' + C f` by fixed-point iteration, with a dense direct oracle.
//! * [`oversmoothing`] turns the two over-smoothing conditions into
//!   executable diagnostics.
//! * [`model`] is the trainable DIGNN network with implicit backward pass.
//! * [`data`] loads datasets and generates stochastic block models.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod equilibrium;
pub mod error;
pub mod graph;
pub mod laplacian;
pub mod linalg;
pub mod model;
pub mod oversmoothing;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{DegreeVector, Graph};
pub use laplacian::{
    EdgeKernel, GeometryParams, GradientMode, LaplacianKind, LaplacianOperator, VertexMeasure,
};
pub use linalg::Matrix;
