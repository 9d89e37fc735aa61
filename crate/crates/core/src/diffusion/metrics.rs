use rand::Rng;

use super::model::{EvalScratch, ScoreModel};
use super::schedule::VpSchedule;
use crate::error::{Error, Result};
use crate::tensor::rng::{normal_vec, RngStream};

/// Points `(t, x_t)` drawn from the forward marginals of a data set.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    pub points: Vec<(f64, Vec<f64>)>,
}

impl ProbeSet {
    /// `t ~ U[t_min, T]`, `x₀` uniform over `data`, `x_t = α_t x₀ + σ_t ε`.
    pub fn from_data(sched: &VpSchedule, data: &[Vec<f64>], n: usize, rng: &RngStream) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("probe data is empty"));
        }
        let mut g = rng.generator();
        let points = (0..n)
            .map(|_| {
                let t = g.random_range(sched.t_min..=sched.horizon);
                let x0 = &data[g.random_range(0..data.len())];
                let (a, s) = sched.alpha_sigma_unchecked(t);
                let eps = normal_vec(&mut g, x0.len());
                (t, x0.iter().zip(&eps).map(|(x, e)| a * x + s * e).collect())
            })
            .collect();
        Ok(ProbeSet { points })
    }
}

/// Root-mean-square score discrepancy `√(mean |s_model − s_oracle|²)` over the probes.
pub fn score_matching_error(model: &ScoreModel, oracle: &ScoreModel, sched: &VpSchedule, probe: &ProbeSet) -> Result<f64> {
    if !oracle.is_analytic() {
        return Err(Error::invalid("score oracle must be analytic"));
    }
    if model.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            context: "score models",
            expected: oracle.dim(),
            actual: model.dim(),
        });
    }
    if probe.points.is_empty() {
        return Ok(0.0);
    }
    let m = model.dim();
    let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
    let mut scratch = EvalScratch::default();
    let mut total = 0.0;
    for (t, x) in &probe.points {
        model.score_into(sched, *t, x, &mut a, &mut scratch);
        oracle.score_into(sched, *t, x, &mut b, &mut scratch);
        total += a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    Ok((total / probe.points.len() as f64).sqrt())
}

/// Empirical quantile-coupling estimate of the 1-D Wasserstein-2 distance
/// between `samples` and a law with quantile function `quantile`, using the
/// midpoint levels `(i + ½)/n`.
pub fn w2_to_quantile_fn(samples: &[f64], quantile: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let ss: f64 = s
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let q = quantile((i as f64 + 0.5) / n);
            (v - q) * (v - q)
        })
        .sum();
    (ss / n).sqrt()
}

/// Quantile-coupling W₂ between two equal-size 1-D samples.
pub fn w2_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("W2 estimate needs two nonempty samples of equal size"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let ss: f64 = x.iter().zip(&y).map(|(u, v)| (u - v) * (u - v)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::model::{GaussianScore, NoiseNet};

    #[test]
    fn model_against_itself_is_zero() {
        let s = VpSchedule::default();
        let g = ScoreModel::Gaussian(GaussianScore::standard(3));
        let data = vec![vec![0.0; 3]; 4];
        let p = ProbeSet::from_data(&s, &data, 100, &RngStream::new(1)).unwrap();
        assert_eq!(score_matching_error(&g, &g, &s, &p).unwrap(), 0.0);
    }

    #[test]
    fn untrained_network_against_shifted_gaussian() {
        // untrained network scores −x; N(μ, I) scores −(x − α_t μ), so the gap is α_t μ
        let s = VpSchedule::default();
        let m = 4;
        let mu = vec![1.0, -0.5, 0.25, 2.0];
        let oracle = ScoreModel::Gaussian(GaussianScore::new(mu.clone(), crate::tensor::matrix::Matrix::identity(m)).unwrap());
        let net = ScoreModel::Network(NoiseNet::new(m, &[8], 4, 1.0, &RngStream::new(2)).unwrap());
        let mut g = RngStream::new(3).generator();
        let data: Vec<Vec<f64>> = (0..500).map(|_| normal_vec(&mut g, m)).collect();
        let p = ProbeSet::from_data(&s, &data, 2_000, &RngStream::new(4)).unwrap();
        let e = score_matching_error(&net, &oracle, &s, &p).unwrap();
        let mu2: f64 = mu.iter().map(|v| v * v).sum();
        let mean_a2 = p.points.iter().map(|(t, _)| s.alpha_sigma(*t).unwrap().0.powi(2)).sum::<f64>() / p.points.len() as f64;
        let expected = (mu2 * mean_a2).sqrt();
        assert!((e - expected).abs() < 1e-10 * expected, "{e} vs {expected}");
    }

    #[test]
    fn normal_quantile_known_values() {
        assert!(normal_quantile(0.5).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.01) + 2.326347874040841).abs() < 1e-12);
    }

    #[test]
    fn w2_of_shifted_samples() {
        let a = [0.0, 1.0, 2.0];
        let b = [3.5, 1.5, 2.5];
        assert!((w2_empirical(&a, &b).unwrap() - 1.5).abs() < 1e-15);
        assert!(w2_empirical(&a, &b[..2]).is_err());
    }
}
