//! Deterministic dense linear algebra: matrices, seeded randomness, spectral
//! estimates, soft-thresholding, and restricted-isometry diagnostics.

pub mod linalg;
pub mod matrix;
pub mod rip;
pub mod rng;
pub mod sketch;

pub use linalg::{largest_singular_value, soft_threshold, symmetric_eigen, SymmetricEigen};
pub use matrix::Matrix;
pub use rip::restricted_isometry_constant;
pub use rng::RngStream;
pub use sketch::{gaussian_sketch, SketchOperator, SketchSpec};
