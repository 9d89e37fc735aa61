use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance-preserving forward process `dX = −½β(t)X dt + √β(t) dB` with
/// `β(t) = a t + b`, so that `X_t = α_t X_0 + σ_t ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VpSchedule {
    pub a: f64,
    pub b: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Reverse integration stops here, away from the `σ → 0` singularity.
    pub t_min: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        VpSchedule::with_horizon(1.0)
    }
}

impl VpSchedule {
    /// `a = 19.9/T²`, `b = 0.1/T`, `t_min = 10⁻³·T`; gives `α_T ≈ 6.6·10⁻³`.
    pub fn with_horizon(horizon: f64) -> Self {
        VpSchedule {
            a: 19.9 / (horizon * horizon),
            b: 0.1 / horizon,
            horizon,
            t_min: 1e-3 * horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a >= 0.0
            && self.b > 0.0
            && self.horizon.is_finite()
            && self.t_min > 0.0
            && self.t_min < self.horizon
            && self.a.is_finite()
            && self.b.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid VP schedule {self:?}")))
        }
    }

    /// `β(t) = g(t)² = a t + b`
    #[inline]
    pub fn beta(&self, t: f64) -> f64 {
        self.a * t + self.b
    }

    /// `∫₀ᵗ β/2 = a t²/4 + b t/2`, so `α_t = exp(−·)`.
    #[inline]
    fn half_integral(&self, t: f64) -> f64 {
        0.25 * self.a * t * t + 0.5 * self.b * t
    }

    /// `(α_t, σ_t)`; errors outside `[0, T]`.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::invalid(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(self.alpha_sigma_unchecked(t))
    }

    #[inline]
    pub(crate) fn alpha_sigma_unchecked(&self, t: f64) -> (f64, f64) {
        let e = self.half_integral(t);
        ((-e).exp(), (-(-2.0 * e).exp_m1()).sqrt())
    }

    /// `X_t = α_t x₀ + σ_t ε` with fresh `ε ~ N(0, I)`; returns `(X_t, ε)`.
    pub fn forward_perturb<R: rand::Rng + ?Sized>(&self, x0: &[f64], t: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let (alpha, sigma) = self.alpha_sigma(t)?;
        let eps = crate::tensor::rng::normal_vec(rng, x0.len());
        let xt = x0.iter().zip(&eps).map(|(x, e)| alpha * x + sigma * e).collect();
        Ok((xt, eps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::RngStream;
    use rand::Rng;

    #[test]
    fn endpoints_and_identity() {
        let s = VpSchedule::default();
        assert_eq!(s.alpha_sigma(0.0).unwrap(), (1.0, 0.0));
        let (a_t, _) = s.alpha_sigma(1.0).unwrap();
        assert!(a_t < 1e-2);
        let mut g = RngStream::new(1).generator();
        for _ in 0..100 {
            let t: f64 = g.random_range(0.0..=1.0);
            let (a, sg) = s.alpha_sigma(t).unwrap();
            assert!((a * a + sg * sg - 1.0).abs() < 1e-10);
        }
        assert!(s.alpha_sigma(1.0 + 1e-9).is_err());
        assert!(s.alpha_sigma(-1e-9).is_err());
    }

    #[test]
    fn linear_beta_closed_form() {
        let s = VpSchedule { a: 0.0, b: 1.0, horizon: 3.0, t_min: 1e-3 };
        let (a, sg) = s.alpha_sigma(2.0).unwrap();
        assert!((a - (-1f64).exp()).abs() < 1e-15);
        assert!((sg - (1.0 - (-2f64).exp()).sqrt()).abs() < 1e-15);
        assert!((a - 0.367879).abs() < 1e-6 && (sg - 0.929873).abs() < 1e-6);
    }

    #[test]
    fn alpha_strictly_decreasing() {
        let s = VpSchedule::default();
        let mut prev = 1.0;
        for i in 1..=1000 {
            let (a, _) = s.alpha_sigma(i as f64 / 1000.0).unwrap();
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn perturb_at_zero_is_identity() {
        let s = VpSchedule::default();
        let mut g = RngStream::new(3).generator();
        let x0 = vec![0.3, -2.0, 5.5];
        let (xt, _) = s.forward_perturb(&x0, 0.0, &mut g).unwrap();
        assert_eq!(xt, x0);
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(VpSchedule { a: 1.0, b: 0.0, horizon: 1.0, t_min: 1e-3 }.validate().is_err());
        assert!(VpSchedule { a: 1.0, b: 0.1, horizon: 1.0, t_min: 2.0 }.validate().is_err());
        assert!(VpSchedule::default().validate().is_ok());
    }
}
