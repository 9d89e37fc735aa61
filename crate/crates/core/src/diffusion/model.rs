use serde::{Deserialize, Serialize};

use super::schedule::VpSchedule;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, Tape};
use crate::tensor::linalg::{symmetric_eigen, SymmetricEigen};
use crate::tensor::matrix::Matrix;
use crate::tensor::rng::RngStream;

/// Sinusoidal features of `τ = t/T` at frequencies `(π/2)·2^j`.
pub fn time_features(t: f64, horizon: f64, out: &mut [f64]) {
    let tau = t / horizon;
    let half = out.len() / 2;
    for j in 0..half {
        let w = std::f64::consts::FRAC_PI_2 * (1u64 << j) as f64;
        out[2 * j] = (w * tau).sin();
        out[2 * j + 1] = (w * tau).cos();
    }
}

/// Time-conditioned noise predictor `ε_θ(t, x)`.
///
/// With `v` the per-coordinate second moment of the training data and
/// `c_in(t) = (α_t² v + σ_t²)^{-1/2}`, the network `F` sees
/// `[c_in·x, features(t)]` and the prediction is
/// `ε_θ = σ_t c_in² x − α_t √v c_in F`. `F = 0` is the optimal predictor for
/// `N(0, vI)` data, so `F` only learns the departure from that baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseNet {
    pub(crate) mlp: Mlp,
    pub(crate) time_features: usize,
    pub(crate) data_second_moment: f64,
}

impl NoiseNet {
    /// Widths `[m + F, hidden.., m]`; the output layer starts at zero.
    pub fn new(m: usize, hidden: &[usize], time_features: usize, data_second_moment: f64, rng: &RngStream) -> Result<Self> {
        if time_features % 2 != 0 || time_features > 62 {
            return Err(Error::invalid(format!("time feature count {time_features} must be even and ≤ 62")));
        }
        if !(data_second_moment > 0.0) || !data_second_moment.is_finite() {
            return Err(Error::invalid("data second moment must be positive"));
        }
        let mut widths = vec![m + time_features];
        widths.extend_from_slice(hidden);
        widths.push(m);
        let mut mlp = Mlp::new(&widths, Activation::Silu, rng)?;
        let n = mlp.num_params();
        let last = widths[widths.len() - 2] * m + m;
        mlp.params_mut()[n - last..].iter_mut().for_each(|p| *p = 0.0);
        Ok(NoiseNet {
            mlp,
            time_features,
            data_second_moment,
        })
    }

    pub fn from_parts(mlp: Mlp, time_features: usize, data_second_moment: f64) -> Result<Self> {
        if mlp.input_dim() != mlp.output_dim() + time_features {
            return Err(Error::invalid("network input width must be output width plus time features"));
        }
        Ok(NoiseNet {
            mlp,
            time_features,
            data_second_moment,
        })
    }

    pub fn dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn time_features(&self) -> usize {
        self.time_features
    }

    pub fn data_second_moment(&self) -> f64 {
        self.data_second_moment
    }

    /// `(skip, out)` with `ε_θ = skip·x + out·F`.
    pub(crate) fn precondition(&self, sched: &VpSchedule, t: f64) -> (f64, f64) {
        let (alpha, sigma) = sched.alpha_sigma_unchecked(t);
        let c_in = 1.0 / (alpha * alpha * self.data_second_moment + sigma * sigma).sqrt();
        (sigma * c_in * c_in, -alpha * self.data_second_moment.sqrt() * c_in)
    }

    pub(crate) fn build_input(&self, sched: &VpSchedule, t: f64, x: &[f64], buf: &mut Vec<f64>) {
        let (alpha, sigma) = sched.alpha_sigma_unchecked(t);
        let c_in = 1.0 / (alpha * alpha * self.data_second_moment + sigma * sigma).sqrt();
        let m = x.len();
        buf.clear();
        buf.extend(x.iter().map(|v| c_in * v));
        buf.resize(m + self.time_features, 0.0);
        time_features(t, sched.horizon, &mut buf[m..]);
    }
}

/// `N(μ, Σ)` data; the VP marginal is `N(α_t μ, α_t² Σ + σ_t² I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianParams", into = "GaussianParams")]
pub struct GaussianScore {
    mean: Vec<f64>,
    cov: Matrix,
    eig: SymmetricEigen,
    /// Diagonal of `Σ` when `Σ` is diagonal.
    diagonal: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianParams {
    mean: Vec<f64>,
    cov: Matrix,
}

impl TryFrom<GaussianParams> for GaussianScore {
    type Error = Error;
    fn try_from(p: GaussianParams) -> Result<Self> {
        GaussianScore::new(p.mean, p.cov)
    }
}

impl From<GaussianScore> for GaussianParams {
    fn from(g: GaussianScore) -> Self {
        GaussianParams { mean: g.mean, cov: g.cov }
    }
}

impl GaussianScore {
    /// Rejects non-symmetric or indefinite covariances. A singular but
    /// semidefinite `Σ` is fine because `σ_t > 0` on `(0, T]`.
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        let m = mean.len();
        if cov.rows() != m || cov.cols() != m {
            return Err(Error::DimensionMismatch {
                context: "gaussian covariance",
                expected: m,
                actual: cov.rows(),
            });
        }
        if !cov.is_symmetric(1e-12 * (1.0 + cov.frobenius_norm())) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let eig = symmetric_eigen(&cov)?;
        let top = eig.values.first().copied().unwrap_or(0.0).abs();
        if eig.values.iter().any(|&l| l < -1e-12 * (1.0 + top)) {
            return Err(Error::Singular("covariance has a negative eigenvalue".into()));
        }
        let is_diag = (0..m).all(|i| (0..m).all(|j| i == j || cov.get(i, j) == 0.0));
        let diagonal = is_diag.then(|| (0..m).map(|i| cov.get(i, i)).collect());
        Ok(GaussianScore { mean, cov, eig, diagonal })
    }

    pub fn standard(m: usize) -> Self {
        GaussianScore::new(vec![0.0; m], Matrix::identity(m)).expect("identity covariance")
    }

    /// Sample mean and covariance (divisor `n`) of `data`.
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return Err(Error::invalid("cannot fit a Gaussian to no data"));
        }
        let m = data[0].len();
        let mut mean = vec![0.0; m];
        for x in data {
            if x.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "gaussian fit",
                    expected: m,
                    actual: x.len(),
                });
            }
            crate::tensor::matrix::axpy(1.0 / n as f64, x, &mut mean);
        }
        let mut cov = Matrix::zeros(m, m);
        for x in data {
            for i in 0..m {
                let ri = (x[i] - mean[i]) / n as f64;
                let row = cov.row_mut(i);
                for j in 0..m {
                    row[j] += ri * (x[j] - mean[j]);
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (cov.get(i, j) + cov.get(j, i));
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        GaussianScore::new(mean, cov)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    /// Whitened coordinates `Qᵀ(x − α μ)` and per-direction variances.
    fn whiten(&self, alpha: f64, sigma: f64, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - alpha * mi).collect();
        let c = self.eig.vectors.tr_mul_vec(&r);
        let v = self
            .eig
            .values
            .iter()
            .map(|&l| alpha * alpha * l.max(0.0) + sigma * sigma)
            .collect();
        (c, v)
    }

    fn score_into(&self, alpha: f64, sigma: f64, x: &[f64], out: &mut [f64], r: &mut Vec<f64>, c: &mut Vec<f64>) {
        if let Some(diag) = &self.diagonal {
            for i in 0..x.len() {
                out[i] = -(x[i] - alpha * self.mean[i]) / (alpha * alpha * diag[i].max(0.0) + sigma * sigma);
            }
            return;
        }
        r.clear();
        r.extend(x.iter().zip(&self.mean).map(|(xi, mi)| xi - alpha * mi));
        c.resize(r.len(), 0.0);
        self.eig.vectors.tr_mul_vec_into(r, c);
        for (ci, &l) in c.iter_mut().zip(&self.eig.values) {
            *ci = -*ci / (alpha * alpha * l.max(0.0) + sigma * sigma);
        }
        self.eig.vectors.mul_vec_into(c, out);
    }

    fn log_density(&self, alpha: f64, sigma: f64, x: &[f64]) -> f64 {
        let (c, v) = self.whiten(alpha, sigma, x);
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        c.iter().zip(&v).map(|(ci, vi)| -0.5 * (ci * ci / vi + vi.ln() + ln2pi)).sum()
    }
}

/// Finite mixture of point masses `Σ_j w_j δ_{c_j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpikeParams", into = "SpikeParams")]
pub struct SpikeMixture {
    points: Matrix,
    log_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpikeParams {
    points: Matrix,
    weights: Vec<f64>,
}

impl TryFrom<SpikeParams> for SpikeMixture {
    type Error = Error;
    fn try_from(p: SpikeParams) -> Result<Self> {
        SpikeMixture::new(p.points, Some(p.weights))
    }
}

impl From<SpikeMixture> for SpikeParams {
    fn from(s: SpikeMixture) -> Self {
        let weights = s.weights();
        SpikeParams { points: s.points, weights }
    }
}

impl SpikeMixture {
    /// One point per row; uniform weights when `weights` is `None`.
    pub fn new(points: Matrix, weights: Option<Vec<f64>>) -> Result<Self> {
        let n = points.rows();
        if n == 0 {
            return Err(Error::invalid("spike mixture needs at least one point"));
        }
        let w = weights.unwrap_or_else(|| vec![1.0; n]);
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                context: "spike mixture weights",
                expected: n,
                actual: w.len(),
            });
        }
        if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        let total: f64 = w.iter().sum();
        let log_weights = w.iter().map(|v| (v / total).ln()).collect();
        Ok(SpikeMixture { points, log_weights })
    }

    pub fn point_mass(c: Vec<f64>) -> Self {
        let m = c.len();
        SpikeMixture::new(Matrix::new(1, m, c).expect("point"), None).expect("single point")
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// `logits_j = ln w_j − |x − α c_j|²/(2σ²)`
    fn logits(&self, alpha: f64, sigma: f64, x: &[f64], out: &mut Vec<f64>) {
        let inv = 0.5 / (sigma * sigma);
        out.clear();
        out.extend((0..self.points.rows()).map(|j| {
            let c = self.points.row(j);
            let mut s = 0.0;
            for (xi, ci) in x.iter().zip(c) {
                let r = xi - alpha * ci;
                s += r * r;
            }
            self.log_weights[j] - inv * s
        }));
    }

    fn score_into(&self, alpha: f64, sigma: f64, x: &[f64], out: &mut [f64], logits: &mut Vec<f64>) {
        self.logits(alpha, sigma, x, logits);
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - mx).exp();
            z += *l;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &r) in logits.iter().enumerate() {
            if r > 0.0 {
                crate::tensor::matrix::axpy(alpha * r / z, self.points.row(j), out);
            }
        }
        let s2 = sigma * sigma;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -(xi - *o) / s2;
        }
    }

    fn log_density(&self, alpha: f64, sigma: f64, x: &[f64]) -> f64 {
        let mut logits = Vec::new();
        self.logits(alpha, sigma, x, &mut logits);
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        let m = x.len() as f64;
        lse - 0.5 * m * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
    }
}

/// A score `s(t, x) ≈ ∇ log p_t(x)` together with its noise form
/// `ε(t, x) = −σ_t s(t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ScoreModel {
    Network(NoiseNet),
    Gaussian(GaussianScore),
    SpikeMixture(SpikeMixture),
}

/// Reusable buffers for repeated model evaluation.
#[derive(Debug, Default)]
pub struct EvalScratch {
    tape: Tape,
    input: Vec<f64>,
    logits: Vec<f64>,
    tmp: Vec<f64>,
}

impl ScoreModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ScoreModel::Network(_) => "trained-network",
            ScoreModel::Gaussian(_) => "analytic-gaussian",
            ScoreModel::SpikeMixture(_) => "analytic-spike-mixture",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::Network(n) => n.dim(),
            ScoreModel::Gaussian(g) => g.mean.len(),
            ScoreModel::SpikeMixture(s) => s.points.cols(),
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, ScoreModel::Network(_))
    }

    fn check(&self, sched: &VpSchedule, t: f64, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "score model input",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if !(t > 0.0 && t <= sched.horizon) {
            return Err(Error::invalid(format!("score queried at t = {t} outside (0, {}]", sched.horizon)));
        }
        Ok(())
    }

    /// Noise prediction `ε(t, x)`.
    pub fn noise_into(&self, sched: &VpSchedule, t: f64, x: &[f64], out: &mut [f64], scratch: &mut EvalScratch) {
        let (alpha, sigma) = sched.alpha_sigma_unchecked(t);
        match self {
            ScoreModel::Network(net) => {
                net.build_input(sched, t, x, &mut scratch.input);
                net.mlp.forward_tape(&scratch.input, &mut scratch.tape);
                let (skip, scale) = net.precondition(sched, t);
                for ((o, f), xi) in out.iter_mut().zip(scratch.tape.output()).zip(x) {
                    *o = skip * xi + scale * f;
                }
            }
            ScoreModel::Gaussian(g) => {
                g.score_into(alpha, sigma, x, out, &mut scratch.logits, &mut scratch.tmp);
                out.iter_mut().for_each(|o| *o *= -sigma);
            }
            ScoreModel::SpikeMixture(s) => {
                s.score_into(alpha, sigma, x, out, &mut scratch.logits);
                out.iter_mut().for_each(|o| *o *= -sigma);
            }
        }
    }

    /// Score `s(t, x)`.
    pub fn score_into(&self, sched: &VpSchedule, t: f64, x: &[f64], out: &mut [f64], scratch: &mut EvalScratch) {
        let (alpha, sigma) = sched.alpha_sigma_unchecked(t);
        match self {
            ScoreModel::Network(_) => {
                self.noise_into(sched, t, x, out, scratch);
                out.iter_mut().for_each(|o| *o /= -sigma);
            }
            ScoreModel::Gaussian(g) => g.score_into(alpha, sigma, x, out, &mut scratch.logits, &mut scratch.tmp),
            ScoreModel::SpikeMixture(s) => s.score_into(alpha, sigma, x, out, &mut scratch.logits),
        }
    }

    pub fn score(&self, sched: &VpSchedule, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check(sched, t, x)?;
        let mut out = vec![0.0; x.len()];
        self.score_into(sched, t, x, &mut out, &mut EvalScratch::default());
        Ok(out)
    }

    pub fn noise(&self, sched: &VpSchedule, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check(sched, t, x)?;
        let mut out = vec![0.0; x.len()];
        self.noise_into(sched, t, x, &mut out, &mut EvalScratch::default());
        Ok(out)
    }

    /// `log p_t(x)` for analytic models; `None` for networks.
    pub fn log_density(&self, sched: &VpSchedule, t: f64, x: &[f64]) -> Result<Option<f64>> {
        self.check(sched, t, x)?;
        let (alpha, sigma) = sched.alpha_sigma_unchecked(t);
        Ok(match self {
            ScoreModel::Network(_) => None,
            ScoreModel::Gaussian(g) => Some(g.log_density(alpha, sigma, x)),
            ScoreModel::SpikeMixture(s) => Some(s.log_density(alpha, sigma, x)),
        })
    }
}

/// `∇ log p_t(x)` for an analytic model; errors on a trained network.
pub fn analytic_score(model: &ScoreModel, sched: &VpSchedule, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    if !model.is_analytic() {
        return Err(Error::invalid("analytic_score needs an analytic model"));
    }
    model.score(sched, t, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::normal_vec;
    use rand::Rng;

    #[test]
    fn standard_gaussian_score_is_minus_x() {
        let s = VpSchedule::default();
        let m = ScoreModel::Gaussian(GaussianScore::standard(3));
        let x = [0.5, -1.0, 2.0];
        for t in [1e-3, 0.1, 0.5, 1.0] {
            let sc = m.score(&s, t, &x).unwrap();
            for (a, b) in sc.iter().zip(&x) {
                assert!((a + b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn point_mass_closed_form() {
        let s = VpSchedule::default();
        let c = vec![1.0, -2.0];
        let m = ScoreModel::SpikeMixture(SpikeMixture::point_mass(c.clone()));
        let x = [0.3, 0.4];
        let t = 0.3;
        let (a, sg) = s.alpha_sigma(t).unwrap();
        let sc = m.score(&s, t, &x).unwrap();
        for i in 0..2 {
            let want = -(x[i] - a * c[i]) / (sg * sg);
            assert!((sc[i] - want).abs() <= 1e-12 * want.abs());
        }
    }

    fn fd_check(model: &ScoreModel, seed: u64) {
        let s = VpSchedule::default();
        let mut g = RngStream::new(seed).generator();
        for _ in 0..20 {
            let t: f64 = g.random_range(0.05..1.0);
            let x = normal_vec(&mut g, model.dim());
            let sc = model.score(&s, t, &x).unwrap();
            let h = 1e-5;
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (model.log_density(&s, t, &xp).unwrap().unwrap()
                    - model.log_density(&s, t, &xm).unwrap().unwrap())
                    / (2.0 * h);
                assert!((fd - sc[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", sc[i]);
            }
        }
    }

    #[test]
    fn scores_match_log_density_differences() {
        let pts = Matrix::from_rows(&[vec![1.0, 0.0, -1.0], vec![-0.5, 2.0, 0.3], vec![0.0, 0.0, 0.7]]).unwrap();
        fd_check(&ScoreModel::SpikeMixture(SpikeMixture::new(pts, Some(vec![0.2, 0.5, 0.3])).unwrap()), 4);
        let cov = Matrix::from_rows(&[vec![2.0, 0.3, 0.0], vec![0.3, 1.0, -0.2], vec![0.0, -0.2, 0.5]]).unwrap();
        fd_check(&ScoreModel::Gaussian(GaussianScore::new(vec![0.1, -0.4, 1.0], cov).unwrap()), 5);
    }

    #[test]
    fn noise_score_duality() {
        let s = VpSchedule::default();
        let net = NoiseNet::new(2, &[8], 4, 1.0, &RngStream::new(1)).unwrap();
        let mut net = net;
        // give the output layer nonzero weights
        let n = net.mlp.num_params();
        for (i, p) in net.mlp.params_mut()[n - 18..].iter_mut().enumerate() {
            *p = 0.1 * (i as f64 - 9.0);
        }
        let models = [
            ScoreModel::Network(net),
            ScoreModel::Gaussian(GaussianScore::standard(2)),
            ScoreModel::SpikeMixture(SpikeMixture::point_mass(vec![1.0, 1.0])),
        ];
        for m in &models {
            for t in [0.01, 0.4, 1.0] {
                let x = [0.2, -0.7];
                let e = m.noise(&s, t, &x).unwrap();
                let sc = m.score(&s, t, &x).unwrap();
                let (_, sg) = s.alpha_sigma(t).unwrap();
                for i in 0..2 {
                    let dual = -e[i] / sg;
                    assert!((dual - sc[i]).abs() <= 4.0 * f64::EPSILON * sc[i].abs(), "{}", m.kind());
                }
            }
        }
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let cov = Matrix::diag(&[1.0, -0.5]);
        assert!(matches!(GaussianScore::new(vec![0.0; 2], cov), Err(Error::Singular(_))));
        assert!(GaussianScore::new(vec![0.0; 2], Matrix::zeros(2, 2)).is_ok());
    }

    #[test]
    fn queries_outside_horizon_fail() {
        let s = VpSchedule::default();
        let m = ScoreModel::Gaussian(GaussianScore::standard(1));
        assert!(m.score(&s, 0.0, &[1.0]).is_err());
        assert!(m.score(&s, 1.5, &[1.0]).is_err());
        assert!(m.score(&s, 0.5, &[1.0, 2.0]).is_err());
    }
}
