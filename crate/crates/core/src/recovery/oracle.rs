use super::{kkt_residual, lasso_objective, LassoProblem};
use crate::error::{Error, Result};
use crate::tensor::matrix::Matrix;
use crate::tensor::rip::{binomial, next_combination};

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    /// Refuse when the number of candidate supports exceeds this.
    pub cap: u128,
    /// Coordinate-descent stopping threshold on the largest coordinate move.
    pub cd_tol: f64,
    /// Full-space subgradient residual the winner must satisfy.
    pub certify_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            cap: 2_000_000,
            cd_tol: 1e-12,
            certify_tol: 1e-7,
        }
    }
}

/// Global Lasso minimiser by enumerating every support of size `≤ s_max`.
///
/// Each support is solved as a small smooth-plus-ℓ₁ problem by cyclic
/// coordinate descent; the lowest full objective wins and must pass the
/// full-space subgradient test, so a minimiser with a larger support is
/// reported as [`Error::Uncertified`] rather than returned silently.
pub fn oracle_solve_exhaustive(p: &LassoProblem<'_>, s_max: usize, opts: &OracleOptions) -> Result<Vec<f64>> {
    let d = p.dim();
    let s_max = s_max.min(d);
    let count: u128 = (0..=s_max).map(|s| binomial(d, s)).sum();
    if count > opts.cap {
        return Err(Error::CapExceeded { count, cap: opts.cap });
    }
    let a = p.design();
    let gram = a.gram();
    let aty = a.tr_mul_vec(p.y());
    let yy = crate::tensor::matrix::dot(p.y(), p.y());
    let lambda = p.lambda();

    let mut best_x = vec![0.0; d];
    let mut best_f = 0.5 * yy;
    for s in 1..=s_max {
        let mut idx: Vec<usize> = (0..s).collect();
        loop {
            if let Some((z, f)) = solve_on_support(&gram, &aty, yy, lambda, &idx, opts.cd_tol) {
                if f < best_f {
                    best_f = f;
                    best_x.iter_mut().for_each(|v| *v = 0.0);
                    for (k, &i) in idx.iter().enumerate() {
                        best_x[i] = z[k];
                    }
                }
            }
            if !next_combination(&mut idx, d) {
                break;
            }
        }
    }
    let residual = kkt_residual(p, &best_x)?;
    let scale = 1.0 + lambda;
    if residual > opts.certify_tol * scale {
        return Err(Error::Uncertified { residual });
    }
    debug_assert!((lasso_objective(p, &best_x)? - best_f).abs() <= 1e-8 * (1.0 + best_f));
    Ok(best_x)
}

/// Minimises `½zᵀGz − cᵀz + ½|y|² + λ|z|₁` over coordinates `idx`.
fn solve_on_support(
    gram: &Matrix,
    aty: &[f64],
    yy: f64,
    lambda: f64,
    idx: &[usize],
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let s = idx.len();
    if idx.iter().any(|&i| gram.get(i, i) <= 0.0) {
        return None;
    }
    let mut z = vec![0.0; s];
    const MAX_SWEEPS: usize = 200_000;
    for _ in 0..MAX_SWEEPS {
        let mut moved: f64 = 0.0;
        for k in 0..s {
            let i = idx[k];
            let mut r = aty[i];
            for (l, &j) in idx.iter().enumerate() {
                if l != k {
                    r -= gram.get(i, j) * z[l];
                }
            }
            let g = gram.get(i, i);
            let new = if r > lambda {
                (r - lambda) / g
            } else if r < -lambda {
                (r + lambda) / g
            } else {
                0.0
            };
            moved = moved.max((new - z[k]).abs());
            z[k] = new;
        }
        if moved <= tol {
            break;
        }
    }
    // a zero coordinate means this support is covered by a smaller one
    if z.iter().any(|v| *v == 0.0) {
        return None;
    }
    let mut quad = 0.0;
    let mut lin = 0.0;
    for k in 0..s {
        lin += aty[idx[k]] * z[k];
        for l in 0..s {
            quad += z[k] * gram.get(idx[k], idx[l]) * z[l];
        }
    }
    let f = 0.5 * quad - lin + 0.5 * yy + lambda * z.iter().map(|v| v.abs()).sum::<f64>();
    Some((z, f))
}
