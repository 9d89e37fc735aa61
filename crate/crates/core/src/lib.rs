//! Compressed-sensing latent diffusion.
//!
//! Sparse data in `ℝ^d` is compressed with a Gaussian sketch `A ∈ ℝ^{m×d}`,
//! a variance-preserving diffusion model is trained and sampled in `ℝ^m`, and
//! generated latents are decoded back to `ℝ^d` by solving a Lasso problem
//! with FISTA. The crate also carries the timing/speedup accounting, the
//! latent-dimension complexity sweep, and a PCA-latent standard scenario
//! analysis workflow for factor-driven portfolios.

pub mod diffusion;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod recovery;
pub mod stats;
pub mod stress;
pub mod tensor;

pub use error::{Error, Result};
