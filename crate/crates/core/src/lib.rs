//! Numerical engine for modal clustering: cluster trees built from density
//! upper level sets, density gradient flows, and transport of level sets by
//! metric projection.
//!
//! The crate is organized around a small set of building blocks:
//!
//! * [`density`] — analytic density models (Gaussian mixtures, Gaussian KDE)
//!   with exact value/gradient/Hessian and a Newton critical-point finder.
//! * [`flow`] — adaptive Runge–Kutta integration of gradient flows, basin
//!   assignment, and the level-parameterized transport maps `psi` / `psi_down`.
//! * [`grid`] / [`tree`] — scalar-field grids, upper-level-set connected
//!   components, and the cluster tree over a level ladder.
//! * [`contour`] / [`transport`] — 2D contour extraction, metric projection
//!   between nearby level sets, Hausdorff distances, reach bounds, and the
//!   iterated projection walk.
//! * [`hybrid`] — combined level-set / basin clustering with the noise rule.
//! * [`verify`] — a deterministic harness that measures every supported
//!   statement on the canonical fixtures and emits a structured report.

pub mod contour;
pub mod density;
pub mod export;
pub mod fixtures;
pub mod flow;
pub mod grid;
pub mod hybrid;
pub mod transport;
pub mod tree;
pub mod verify;

/// Points and gradients are dynamically sized column vectors.
pub type Point = nalgebra::DVector<f64>;
/// Hessians and covariance matrices.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Convenience constructor for a point from a slice.
pub fn point(coords: &[f64]) -> Point {
    Point::from_column_slice(coords)
}
