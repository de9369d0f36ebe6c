//! Mesh extraction from signed-distance grids.
//!
//! The crate turns a regular grid of signed distances into a triangle mesh and
//! measures how faithful that mesh is. It provides:
//!
//! - [`geom`]: exact closest-point queries, triangle intersection tests, ray
//!   parity, OBJ I/O, surface sampling, and the spatial indices behind them;
//! - [`grid`]: the signed-distance grid type, analytic shapes, mesh-to-SDF
//!   sampling, noise injection, and the binary grid file format;
//! - [`field`]: finite-difference gradients and edge-crossing interpolation;
//! - [`contour`]: the dual-mesh topology (one vertex per active cell, one quad
//!   per active edge), midpoint and QEF vertex placement, and marching cubes;
//! - [`sdc`]: per-cell vertex optimization that minimizes a distance-consistency
//!   plus normal-consistency objective over the dual mesh;
//! - [`din`]: a small latent-conditioned implicit network with exact
//!   reverse-mode gradients, trained on SDF samples with an optional
//!   mesh-consistency regularizer;
//! - [`metrics`]: chamfer and edge-chamfer distances, normal consistency,
//!   self-intersection counting, voxel IoU, and local surface discrepancies.
//!
//! Built with the `parallel` feature (default), hot loops run on rayon;
//! without it they run sequentially. Both modes produce bit-identical
//! results: parallel maps are ordered and every floating-point reduction
//! uses a fixed-shape pairwise tree sum.

// Validation guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`,
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod din;
pub mod error;
pub mod field;
pub mod geom;
pub mod grid;
pub mod metrics;
mod parallel;
pub mod sdc;

pub use error::{Error, Result};
pub use geom::{TriMesh, Vec3};
pub use grid::SdfGrid;
