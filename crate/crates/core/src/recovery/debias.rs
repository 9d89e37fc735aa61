use super::{support_of, LassoProblem};
use crate::error::{Error, Result};
use crate::tensor::linalg::{cholesky, cholesky_solve, psd_pseudo_solve};

/// Least-squares refit of `y` on the columns where `|x̂_i| > rel · |x̂|_∞`;
/// zero elsewhere. A rank-deficient support falls back to the minimum-norm
/// solution with a warning.
pub fn debias(x_hat: &[f64], p: &LassoProblem<'_>, support_threshold: f64) -> Result<Vec<f64>> {
    if x_hat.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            context: "debias input",
            expected: p.dim(),
            actual: x_hat.len(),
        });
    }
    let support = support_of(x_hat, support_threshold);
    let mut out = vec![0.0; p.dim()];
    if support.is_empty() {
        return Ok(out);
    }
    let a = p.design();
    if support.len() > a.rows() {
        return Err(Error::invalid(format!(
            "support of size {} exceeds {} measurements",
            support.len(),
            a.rows()
        )));
    }
    let sub = a.select_columns(&support);
    let g = sub.gram();
    let rhs = sub.tr_mul_vec(p.y());
    let z = match cholesky(&g) {
        Ok(l) => cholesky_solve(&l, &rhs),
        Err(_) => {
            log::warn!("debias: rank-deficient support of size {}, using pseudo-inverse", support.len());
            psd_pseudo_solve(&g, &rhs, 1e-12)?
        }
    };
    for (k, &i) in support.iter().enumerate() {
        out[i] = z[k];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::matrix::Matrix;
    use crate::tensor::rng::{normal_vec, RngStream};

    #[test]
    fn exact_support_noiseless_recovers_signal() {
        let mut g = RngStream::new(2).generator();
        let a = Matrix::new(20, 50, normal_vec(&mut g, 1000)).unwrap();
        let mut x = vec![0.0; 50];
        x[3] = 1.2;
        x[17] = -0.7;
        x[41] = 2.0;
        let y = a.mul_vec(&x);
        let p = LassoProblem::new(&a, y, 0.1).unwrap();
        // shrunken estimate on the right support
        let shrunk: Vec<f64> = x.iter().map(|v| v * 0.8).collect();
        let z = debias(&shrunk, &p, 1e-6).unwrap();
        for (u, v) in z.iter().zip(&x) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_support_gives_zero() {
        let a = Matrix::identity(3);
        let p = LassoProblem::new(&a, vec![1.0, 2.0, 3.0], 0.1).unwrap();
        assert_eq!(debias(&[0.0; 3], &p, 1e-6).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn duplicated_columns_fall_back_to_pseudo_inverse() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let p = LassoProblem::new(&a, vec![2.0, 1.0], 0.1).unwrap();
        let z = debias(&[1.0, 1.0, 0.0], &p, 1e-6).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12 && (z[1] - 1.0).abs() < 1e-12);
    }
}
