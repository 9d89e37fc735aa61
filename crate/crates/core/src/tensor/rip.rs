//! Exhaustive restricted-isometry constants for desk-scale matrices.

use crate::error::{Error, Result};
use crate::tensor::linalg::extreme_eigenvalues;
use crate::tensor::matrix::Matrix;

pub const DEFAULT_SUBSET_CAP: u128 = 2_000_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// `δ_S`: the largest deviation from 1 of any eigenvalue of `A_Tᵀ A_T` over
/// column subsets `|T| ≤ S`.
///
/// Only subsets of size exactly `S` are visited. Eigenvalues of a principal
/// submatrix interlace those of the full Gram block, so smaller subsets never
/// set a new extreme.
pub fn restricted_isometry_constant(a: &Matrix, s: usize, cap: u128) -> Result<f64> {
    let d = a.cols();
    if s == 0 || s > d {
        return Err(Error::invalid(format!("RIP order {s} outside 1..={d}")));
    }
    let count = binomial(d, s);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let gram = a.gram();
    let mut delta: f64 = 0.0;
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        let sub = gram.principal_submatrix(&idx);
        let (lo, hi) = extreme_eigenvalues(&sub)?;
        delta = delta.max(1.0 - lo).max(hi - 1.0);
        if !next_combination(&mut idx, d) {
            break;
        }
    }
    Ok(delta)
}

/// Advances `idx` to the next `k`-subset of `0..n` in lexicographic order.
pub fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(40, 3), 9880);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn enumerates_all_subsets() {
        let mut idx = vec![0, 1];
        let mut n = 1;
        while next_combination(&mut idx, 5) {
            n += 1;
        }
        assert_eq!(n, 10);
    }

    #[test]
    fn identity_and_duplicate_columns() {
        let i = Matrix::identity(5);
        for s in 1..=5 {
            assert_eq!(restricted_isometry_constant(&i, s, DEFAULT_SUBSET_CAP).unwrap(), 0.0);
        }
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let dup = Matrix::from_rows(&[vec![r, r, 0.0], vec![r, r, 1.0]]).unwrap();
        assert!(restricted_isometry_constant(&dup, 2, DEFAULT_SUBSET_CAP).unwrap() >= 1.0);
    }

    #[test]
    fn refuses_beyond_cap() {
        let a = Matrix::identity(30);
        assert!(matches!(
            restricted_isometry_constant(&a, 10, 1000),
            Err(Error::CapExceeded { .. })
        ));
        assert!(restricted_isometry_constant(&a, 0, 1000).is_err());
    }
}
