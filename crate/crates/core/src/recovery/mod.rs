//! Sparse recovery by ℓ₁-regularised least squares.
//!
//! The objective is `F(x) = ½|Ax − y|₂² + λ|x|₁`, split as a smooth part
//! `f(x) = ½|Ax − y|₂²` with `∇f(x) = Aᵀ(Ax − y)` and the non-smooth `λ|x|₁`,
//! whose proximal map is soft-thresholding.

mod debias;
mod fista;
mod oracle;

pub use debias::debias;
pub use fista::{
    fista_continuation, fista_momentum, fista_solve, fista_solve_with, ista_solve, RecoveryResult, SolveOptions,
    SolverTrace, StopReason, TraceEntry,
};
pub use oracle::{oracle_solve_exhaustive, OracleOptions};

use crate::error::{Error, Result};
use crate::tensor::linalg::{largest_singular_value, soft_threshold_in_place};
use crate::tensor::matrix::{norm1, Matrix};
use crate::tensor::sketch::SketchOperator;

/// An instance of `min ½|Ax − y|₂² + λ|x|₁`.
#[derive(Clone, Debug)]
pub struct LassoProblem<'a> {
    design: &'a Matrix,
    lipschitz: f64,
    y: Vec<f64>,
    lambda: f64,
}

impl<'a> LassoProblem<'a> {
    /// Uses the sketch's cached Lipschitz constant.
    pub fn from_sketch(sketch: &'a SketchOperator, y: Vec<f64>, lambda: f64) -> Result<Self> {
        Self::with_lipschitz(sketch.matrix(), sketch.lipschitz(), y, lambda)
    }

    /// Estimates `L = s_max(A)²` by power iteration.
    pub fn new(design: &'a Matrix, y: Vec<f64>, lambda: f64) -> Result<Self> {
        let s = largest_singular_value(design, 1e-12, 1_000_000)?;
        Self::with_lipschitz(design, s * s, y, lambda)
    }

    pub fn with_lipschitz(design: &'a Matrix, lipschitz: f64, y: Vec<f64>, lambda: f64) -> Result<Self> {
        if y.len() != design.rows() {
            return Err(Error::DimensionMismatch {
                context: "lasso observation",
                expected: design.rows(),
                actual: y.len(),
            });
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lasso lambda must be positive, got {lambda}")));
        }
        if !(lipschitz > 0.0) {
            return Err(Error::invalid("lipschitz constant must be positive"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation has non-finite entries"));
        }
        Ok(LassoProblem {
            design,
            lipschitz,
            y,
            lambda,
        })
    }

    pub fn design(&self) -> &Matrix {
        self.design
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    /// Same design and observation, different regularisation.
    pub fn with_lambda(&self, lambda: f64) -> Result<LassoProblem<'a>> {
        Self::with_lipschitz(self.design, self.lipschitz, self.y.clone(), lambda)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "lasso iterate",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `Ax − y`
    pub(crate) fn residual_into(&self, x: &[f64], out: &mut [f64]) {
        self.design.mul_vec_into(x, out);
        for (o, yi) in out.iter_mut().zip(&self.y) {
            *o -= yi;
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut r = vec![0.0; self.design.rows()];
        self.residual_into(x, &mut r);
        Ok(self.design.tr_mul_vec(&r))
    }

    /// Adjoint step `Aᵀy`, the default starting point for the solvers.
    pub fn adjoint_start(&self) -> Vec<f64> {
        self.design.tr_mul_vec(&self.y)
    }

    /// Smallest `λ` for which the minimiser is the zero vector: `|Aᵀy|_∞`.
    pub fn lambda_max(&self) -> f64 {
        crate::tensor::matrix::norm_inf(&self.adjoint_start())
    }
}

/// `F(x) = ½|Ax − y|₂² + λ|x|₁`
pub fn lasso_objective(p: &LassoProblem<'_>, x: &[f64]) -> Result<f64> {
    p.check_dim(x)?;
    let mut r = vec![0.0; p.design.rows()];
    p.residual_into(x, &mut r);
    let f = 0.5 * crate::tensor::matrix::dot(&r, &r) + p.lambda * norm1(x);
    if !f.is_finite() {
        return Err(Error::NonFinite {
            stage: "lasso objective",
            step: 0,
        });
    }
    Ok(f)
}

/// One proximal-gradient step `SoftThreshold(x' − ∇f(x')/L, λ/L)`.
pub fn prox_step(p: &LassoProblem<'_>, x_prev: &[f64], lipschitz: f64) -> Result<Vec<f64>> {
    p.check_dim(x_prev)?;
    if !(lipschitz > 0.0) {
        return Err(Error::invalid("step Lipschitz constant must be positive"));
    }
    if lipschitz < p.lipschitz * (1.0 - 1e-9) {
        log::warn!(
            "prox step with L = {lipschitz} below the gradient Lipschitz constant {}",
            p.lipschitz
        );
    }
    let g = p.gradient(x_prev)?;
    let mut out: Vec<f64> = x_prev.iter().zip(&g).map(|(x, gi)| x - gi / lipschitz).collect();
    soft_threshold_in_place(&mut out, p.lambda / lipschitz);
    Ok(out)
}

/// Largest distance from `−∇f(x)_i` to `λ ∂|x_i|` over coordinates; zero
/// exactly at a minimiser.
pub fn subgradient_residual(grad: &[f64], x: &[f64], lambda: f64) -> f64 {
    grad.iter()
        .zip(x)
        .map(|(&g, &xi)| {
            if xi > 0.0 {
                (g + lambda).abs()
            } else if xi < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn kkt_residual(p: &LassoProblem<'_>, x: &[f64]) -> Result<f64> {
    let g = p.gradient(x)?;
    Ok(subgradient_residual(&g, x, p.lambda))
}

/// Universal threshold `σ √(2 ln d)` for per-coordinate noise level `σ`.
pub fn universal_lambda(sigma: f64, d: usize) -> f64 {
    sigma * (2.0 * (d as f64).ln()).sqrt()
}

/// Indices with `|x_i| > rel · |x|_∞`.
pub fn support_of(x: &[f64], rel: f64) -> Vec<usize> {
    let cut = rel * crate::tensor::matrix::norm_inf(x);
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > cut)
        .map(|(i, _)| i)
        .collect()
}
