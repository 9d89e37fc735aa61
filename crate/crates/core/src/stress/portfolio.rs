use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::linalg::{cholesky, cholesky_solve, extreme_eigenvalues};
use crate::tensor::matrix::{dot, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PortfolioKind {
    Equal,
    GmvpLongOnly,
    RiskParity,
}

impl PortfolioKind {
    pub const ALL: [PortfolioKind; 3] = [PortfolioKind::Equal, PortfolioKind::GmvpLongOnly, PortfolioKind::RiskParity];

    pub fn name(self) -> &'static str {
        match self {
            PortfolioKind::Equal => "equal",
            PortfolioKind::GmvpLongOnly => "gmvp-long-only",
            PortfolioKind::RiskParity => "risk-parity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub kind: PortfolioKind,
    pub weights: Vec<f64>,
    /// Projected-gradient optimality residual, for the minimum-variance kind.
    pub kkt_residual: Option<f64>,
    /// Ridge added to a singular covariance.
    pub ridge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioOptions {
    pub max_iter: usize,
    /// Target for the optimality residual of the minimum-variance solve and
    /// for the relative spread of risk contributions.
    pub tol: f64,
}

impl Default for PortfolioOptions {
    fn default() -> Self {
        PortfolioOptions { max_iter: 100_000, tol: 1e-12 }
    }
}

/// Long-only minimum-variance solutions must certify to this residual.
pub const GMVP_KKT_TOL: f64 = 1e-6;

/// Euclidean projection onto `{w ≥ 0, Σw = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// `|w − P(w − ∇f(w)/L)|_∞` for `f = wᵀΣw` and `L = 2λ_max(Σ)`; zero
/// exactly at the long-only minimum-variance solution.
pub fn gmvp_kkt_residual(cov: &Matrix, w: &[f64]) -> Result<f64> {
    let (_, lmax) = extreme_eigenvalues(cov)?;
    let step = 1.0 / (2.0 * lmax.max(f64::MIN_POSITIVE));
    Ok(kkt_with_step(cov, w, step))
}

fn kkt_with_step(cov: &Matrix, w: &[f64], step: f64) -> f64 {
    let g = cov.mul_vec(w);
    let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - 2.0 * step * gi).collect();
    project_simplex(&trial).iter().zip(w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn risk_contributions(cov: &Matrix, w: &[f64]) -> Vec<f64> {
    cov.mul_vec(w).iter().zip(w).map(|(s, wi)| wi * s).collect()
}

fn check_cov(cov: &Matrix) -> Result<()> {
    if !cov.is_square() || cov.rows() == 0 {
        return Err(Error::invalid("covariance must be square and nonempty"));
    }
    if !cov.is_symmetric(1e-10 * cov.frobenius_norm().max(1.0)) {
        return Err(Error::invalid("covariance must be symmetric"));
    }
    if cov.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("covariance has non-finite entries"));
    }
    Ok(())
}

pub fn portfolio_weights(kind: PortfolioKind, cov: &Matrix, opts: &PortfolioOptions) -> Result<PortfolioWeights> {
    check_cov(cov)?;
    let n = cov.rows();
    let (weights, kkt_residual, ridge) = match kind {
        PortfolioKind::Equal => (vec![1.0 / n as f64; n], None, 0.0),
        PortfolioKind::GmvpLongOnly => {
            let (w, r, ridge) = gmvp_long_only(cov, opts)?;
            (w, Some(r), ridge)
        }
        PortfolioKind::RiskParity => (risk_parity(cov, opts)?, None, 0.0),
    };
    Ok(PortfolioWeights {
        kind,
        weights,
        kkt_residual,
        ridge,
    })
}

/// Accelerated projected gradient with restarts, then an exact solve on the
/// identified support when it certifies better.
fn gmvp_long_only(cov: &Matrix, opts: &PortfolioOptions) -> Result<(Vec<f64>, f64, f64)> {
    let n = cov.rows();
    let (lmin, lmax) = extreme_eigenvalues(cov)?;
    if !(lmax > 0.0) || lmin < -1e-10 * lmax {
        return Err(Error::invalid("covariance must be positive semidefinite and nonzero"));
    }
    let mut sigma = cov.clone();
    let mut ridge = 0.0;
    if lmin <= 1e-12 * lmax {
        ridge = 1e-8 * lmax;
        log::warn!("covariance is singular; adding ridge {ridge:e}");
        for i in 0..n {
            sigma.set(i, i, sigma.get(i, i) + ridge);
        }
    }
    let step = 1.0 / (2.0 * (lmax + ridge));
    let objective = |w: &[f64]| dot(w, &sigma.mul_vec(w));
    let mut w = vec![1.0 / n as f64; n];
    let mut z = w.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&w);
    for _ in 0..opts.max_iter {
        let g = sigma.mul_vec(&z);
        let trial: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - 2.0 * step * gi).collect();
        let w_next = project_simplex(&trial);
        let f = objective(&w_next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f > f_prev {
            z = w.clone();
            t = 1.0;
            continue;
        }
        let mom = (t - 1.0) / t_next;
        z = w_next.iter().zip(&w).map(|(a, b)| a + mom * (a - b)).collect();
        w = w_next;
        t = t_next;
        f_prev = f;
        if kkt_with_step(&sigma, &w, step) <= opts.tol {
            break;
        }
    }
    let mut residual = kkt_with_step(&sigma, &w, step);
    let support: Vec<usize> = (0..n).filter(|&i| w[i] > 1e-9).collect();
    if let Ok(l) = cholesky(&sigma.principal_submatrix(&support)) {
        let raw = cholesky_solve(&l, &vec![1.0; support.len()]);
        let total: f64 = raw.iter().sum();
        if total > 0.0 && raw.iter().all(|&v| v >= 0.0) {
            let mut exact = vec![0.0; n];
            for (&i, v) in support.iter().zip(&raw) {
                exact[i] = v / total;
            }
            let r = kkt_with_step(&sigma, &exact, step);
            if r < residual {
                w = exact;
                residual = r;
            }
        }
    }
    normalize(&mut w);
    if residual > GMVP_KKT_TOL {
        return Err(Error::NoConvergence {
            what: "long-only minimum variance",
            iterations: opts.max_iter,
            last_estimate: residual,
        });
    }
    Ok((w, residual, ridge))
}

/// Cyclical coordinate updates for `min ½wᵀΣw − (1/n)Σ ln w_i`, whose
/// solution normalized to unit sum equalizes `w_i(Σw)_i`.
fn risk_parity(cov: &Matrix, opts: &PortfolioOptions) -> Result<Vec<f64>> {
    let n = cov.rows();
    if (0..n).any(|i| !(cov.get(i, i) > 0.0)) {
        return Err(Error::invalid("risk parity needs positive variances"));
    }
    let b = 1.0 / n as f64;
    let mut w: Vec<f64> = (0..n).map(|i| 1.0 / cov.get(i, i).sqrt()).collect();
    normalize(&mut w);
    for _ in 0..opts.max_iter {
        for i in 0..n {
            let sii = cov.get(i, i);
            let c = dot(cov.row(i), &w) - sii * w[i];
            w[i] = (-c + (c * c + 4.0 * sii * b).sqrt()) / (2.0 * sii);
        }
        let rc = risk_contributions(cov, &w);
        let (lo, hi) = rc.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), &v| (a.min(v), z.max(v)));
        if hi - lo <= opts.tol * hi.abs() {
            normalize(&mut w);
            return Ok(w);
        }
    }
    Err(Error::NoConvergence {
        what: "risk parity",
        iterations: opts.max_iter,
        last_estimate: {
            let rc = risk_contributions(cov, &w);
            let hi = rc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi - rc.iter().cloned().fold(f64::INFINITY, f64::min)) / hi
        },
    })
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
}

pub fn portfolio_return(w: &PortfolioWeights, y: &[f64]) -> Result<f64> {
    if y.len() != w.weights.len() {
        return Err(Error::DimensionMismatch {
            context: "portfolio return",
            expected: w.weights.len(),
            actual: y.len(),
        });
    }
    Ok(dot(&w.weights, y))
}

/// Sample covariance (divisor `n − 1`) of the rows.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid("covariance needs at least two rows"));
    }
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = Matrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            let ri = r[i] - mean[i];
            for j in 0..=i {
                c.set(i, j, c.get(i, j) + ri * (r[j] - mean[j]));
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = c.get(i, j) / (n - 1) as f64;
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::{normal_vec, RngStream};
    use rand::Rng;

    fn random_cov(n: usize, seed: u64) -> Matrix {
        let mut g = RngStream::new(seed).generator();
        let b = Matrix::from_rows(&(0..n).map(|_| normal_vec(&mut g, n + 2)).collect::<Vec<_>>()).unwrap();
        let mut c = b.matmul(&b.transpose()).unwrap();
        for i in 0..n {
            c.set(i, i, c.get(i, i) + 0.05);
        }
        c
    }

    #[test]
    fn identity_gives_equal_weights() {
        let c = Matrix::identity(4);
        for kind in PortfolioKind::ALL {
            let w = portfolio_weights(kind, &c, &PortfolioOptions::default()).unwrap();
            for v in &w.weights {
                assert!((v - 0.25).abs() < 1e-12, "{kind:?}");
            }
        }
    }

    #[test]
    fn diagonal_risk_parity_is_inverse_vol() {
        let c = Matrix::diag(&[0.04, 0.01, 0.25]);
        let w = portfolio_weights(PortfolioKind::RiskParity, &c, &PortfolioOptions::default()).unwrap();
        let inv = [5.0, 10.0, 2.0];
        let s: f64 = inv.iter().sum();
        for (a, b) in w.weights.iter().zip(inv) {
            assert!((a - b / s).abs() < 1e-10);
        }
    }

    #[test]
    fn risk_contributions_equalize() {
        let c = random_cov(6, 3);
        let w = portfolio_weights(PortfolioKind::RiskParity, &c, &PortfolioOptions::default()).unwrap();
        let rc = risk_contributions(&c, &w.weights);
        let hi = rc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = rc.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((hi - lo) / hi <= 1e-6);
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn gmvp_beats_random_simplex_points() {
        let c = random_cov(5, 11);
        let w = portfolio_weights(PortfolioKind::GmvpLongOnly, &c, &PortfolioOptions::default()).unwrap();
        assert!(w.kkt_residual.unwrap() <= GMVP_KKT_TOL);
        let best = dot(&w.weights, &c.mul_vec(&w.weights));
        let mut g = RngStream::new(12).generator();
        for _ in 0..100_000 {
            let mut p: Vec<f64> = (0..5).map(|_| -g.random::<f64>().max(1e-300).ln()).collect();
            normalize(&mut p);
            assert!(best <= dot(&p, &c.mul_vec(&p)) + 1e-15);
        }
    }

    #[test]
    fn gmvp_two_asset_closed_form() {
        let c = Matrix::from_rows(&[vec![0.04, 0.006], vec![0.006, 0.09]]).unwrap();
        let w = portfolio_weights(PortfolioKind::GmvpLongOnly, &c, &PortfolioOptions::default()).unwrap();
        let w1 = (0.09 - 0.006) / (0.04 + 0.09 - 2.0 * 0.006);
        assert!((w.weights[0] - w1).abs() < 1e-10);
        // a dominated asset is dropped entirely
        let c = Matrix::from_rows(&[vec![0.01, 0.012], vec![0.012, 0.04]]).unwrap();
        let w = portfolio_weights(PortfolioKind::GmvpLongOnly, &c, &PortfolioOptions::default()).unwrap();
        assert_eq!(w.weights, vec![1.0, 0.0]);
    }

    #[test]
    fn singular_covariance_is_ridged() {
        let c = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let w = portfolio_weights(PortfolioKind::GmvpLongOnly, &c, &PortfolioOptions::default()).unwrap();
        assert!(w.ridge > 0.0);
        for v in &w.weights {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn returns_and_projection() {
        let w = PortfolioWeights {
            kind: PortfolioKind::Equal,
            weights: vec![0.5, 0.5, 0.0],
            kkt_residual: None,
            ridge: 0.0,
        };
        assert_eq!(portfolio_return(&w, &[0.02, 0.02, 9.0]).unwrap(), 0.02);
        assert!(portfolio_return(&w, &[1.0]).is_err());
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn covariance_of_known_rows() {
        let c = sample_covariance(&[vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 2.0]]).unwrap();
        assert_eq!(c.as_slice(), &[4.0, 0.0, 0.0, 0.0]);
    }
}
