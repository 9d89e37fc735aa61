use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::linalg::symmetric_eigen;
use crate::tensor::matrix::{dot, Matrix};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const PCA_RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows in order of decreasing variance.
    pub components: Matrix,
    /// Share of the total variance carried by each component.
    pub explained_variance: Vec<f64>,
    /// Variance along each component.
    pub variances: Vec<f64>,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.components.cols()
    }

    pub fn cumulative_explained(&self) -> f64 {
        self.explained_variance.iter().sum()
    }

    /// `components·(x − mean)`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "pca encode",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(self.components.mul_vec(&c))
    }

    /// `mean + componentsᵀ·z`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.k() {
            return Err(Error::DimensionMismatch {
                context: "pca decode",
                expected: self.k(),
                actual: z.len(),
            });
        }
        let mut x = self.components.tr_mul_vec(z);
        x.iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        Ok(x)
    }
}

/// Principal components of the rows of `data` from the sample covariance
/// (divisor `n − 1`). Each component is signed so that its largest-magnitude
/// loading is positive. If fewer than `k` eigenvalues are numerically
/// nonzero, the model keeps only those and logs a warning.
pub fn pca_fit(data: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least two rows"));
    }
    let d = data[0].len();
    if data.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("PCA rows have different lengths"));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={}", n.min(d))));
    }
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = Matrix::zeros(d, d);
    for r in data {
        for i in 0..d {
            let ri = (r[i] - mean[i]) / (n - 1) as f64;
            for j in 0..=i {
                let v = cov.get(i, j) + ri * (r[j] - mean[j]);
                cov.set(i, j, v);
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov.set(j, i, cov.get(i, j));
        }
    }
    let eig = symmetric_eigen(&cov)?;
    let total: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Singular("data has zero variance".into()));
    }
    let top = eig.values[0];
    let rank = eig.values.iter().take_while(|&&v| v > PCA_RANK_TOL * top).count();
    let k_eff = k.min(rank);
    if k_eff < k {
        log::warn!("covariance has numerical rank {rank}; keeping {k_eff} of {k} requested components");
    }
    let mut rows = Vec::with_capacity(k_eff);
    for j in 0..k_eff {
        let mut v = eig.vectors.column(j);
        let lead = v.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let nrm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nrm);
        rows.push(v);
    }
    let variances: Vec<f64> = eig.values[..k_eff].to_vec();
    Ok(PcaModel {
        mean,
        components: Matrix::from_rows(&rows)?,
        explained_variance: variances.iter().map(|v| v / total).collect(),
        variances,
        total_variance: total,
    })
}
