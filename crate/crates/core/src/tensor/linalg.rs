//! Small dense kernels: spectral norm by power iteration, a cyclic Jacobi
//! eigensolver for symmetric matrices, Cholesky factorisation, and the
//! soft-thresholding operator.

use crate::error::{Error, Result};
use crate::tensor::matrix::{axpy, dot, norm2, Matrix};

/// Largest singular value of `a` by power iteration on `AᵀA`.
///
/// The start vector is the normalised sum of the rows of `a`. Iteration stops
/// once the eigen-residual `|AᵀA v − μ v|` drops below `tol · μ`, which bounds
/// the relative error of `σ = √μ` by `tol / 2` (relative to the nearest
/// eigenvalue of `AᵀA`).
pub fn largest_singular_value(a: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid("power iteration tolerance must be positive"));
    }
    let n = a.cols();
    if n == 0 || a.rows() == 0 || a.as_slice().iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("largest_singular_value of a zero matrix"));
    }
    let mut v = start_vector(a);
    let mut av = vec![0.0; a.rows()];
    let mut w = vec![0.0; n];
    let mut mu = 0.0;
    for _ in 0..max_iter {
        a.mul_vec_into(&v, &mut av);
        a.tr_mul_vec_into(&av, &mut w);
        mu = dot(&v, &w);
        if mu <= 0.0 {
            // start vector in the null space; nudge with a basis vector
            v = vec![0.0; n];
            v[widest_column(a)] = 1.0;
            continue;
        }
        let mut res = 0.0;
        for (wi, vi) in w.iter().zip(&v) {
            let r = wi - mu * vi;
            res += r * r;
        }
        let wn = norm2(&w);
        if !wn.is_finite() {
            return Err(Error::NonFinite {
                stage: "power iteration",
                step: 0,
            });
        }
        if res.sqrt() <= tol * mu {
            return Ok(mu.sqrt());
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: max_iter,
        last_estimate: mu.max(0.0).sqrt(),
    })
}

fn start_vector(a: &Matrix) -> Vec<f64> {
    let n = a.cols();
    let mut v = vec![0.0; n];
    for i in 0..a.rows() {
        axpy(1.0, a.row(i), &mut v);
    }
    let nv = norm2(&v);
    if nv > 0.0 {
        v.iter_mut().for_each(|x| *x /= nv);
        return v;
    }
    let mut e = vec![0.0; n];
    e[widest_column(a)] = 1.0;
    e
}

fn widest_column(a: &Matrix) -> usize {
    let mut best = (0, -1.0);
    for j in 0..a.cols() {
        let s: f64 = (0..a.rows()).map(|i| a.get(i, j).powi(2)).sum();
        if s > best.1 {
            best = (j, s);
        }
    }
    best.0
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEigen {
    /// Eigenvalues in non-increasing order.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::invalid("symmetric_eigen needs a square matrix"));
    }
    if !a.is_symmetric(1e-9) {
        return Err(Error::invalid("symmetric_eigen needs a symmetric matrix"));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();
    if n <= 1 || total == 0.0 {
        return Ok(sorted(m, v));
    }
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m.get(p, q).powi(2);
            }
        }
        if off.sqrt() <= 1e-15 * total {
            return Ok(sorted(m, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(Error::NoConvergence {
        what: "jacobi eigensolver",
        iterations: MAX_SWEEPS,
        last_estimate: 0.0,
    })
}

fn sorted(m: Matrix, v: Matrix) -> SymmetricEigen {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    SymmetricEigen { values, vectors }
}

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub fn extreme_eigenvalues(a: &Matrix) -> Result<(f64, f64)> {
    match a.rows() {
        0 => Err(Error::invalid("empty matrix")),
        1 => Ok((a.get(0, 0), a.get(0, 0))),
        2 => {
            let (p, q, r) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
            let mean = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            Ok((mean - rad, mean + rad))
        }
        _ => {
            let e = symmetric_eigen(a)?;
            Ok((*e.values.last().unwrap(), e.values[0]))
        }
    }
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::invalid("cholesky needs a square matrix"));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k).powi(2);
        }
        if !(d > 1e-13 * scale) {
            return Err(Error::Singular(format!("pivot {j} is {d:e}")));
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / djj);
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    y
}

/// Minimum-norm solution of `G x = b` for symmetric PSD `G`, dropping
/// eigen-directions below `rel_cutoff · λ_max`.
pub fn psd_pseudo_solve(g: &Matrix, b: &[f64], rel_cutoff: f64) -> Result<Vec<f64>> {
    let e = symmetric_eigen(g)?;
    let n = g.rows();
    let cutoff = e.values.first().copied().unwrap_or(0.0).max(0.0) * rel_cutoff;
    let mut x = vec![0.0; n];
    for (j, &lam) in e.values.iter().enumerate() {
        if lam <= cutoff || lam <= 0.0 {
            continue;
        }
        let col = e.vectors.column(j);
        let coef = dot(&col, b) / lam;
        axpy(coef, &col, &mut x);
    }
    Ok(x)
}

/// Coordinate-wise soft-thresholding `sign(x)·max(|x| − a, 0)`.
pub fn soft_threshold(x: &[f64], a: f64) -> Result<Vec<f64>> {
    if !(a >= 0.0) {
        return Err(Error::invalid(format!("soft-threshold level {a} is negative")));
    }
    let mut out = x.to_vec();
    soft_threshold_in_place(&mut out, a);
    Ok(out)
}

#[inline]
pub(crate) fn soft_threshold_in_place(x: &mut [f64], a: f64) {
    for v in x.iter_mut() {
        *v = if *v > a {
            *v - a
        } else if *v < -a {
            *v + a
        } else {
            0.0
        };
    }
}
