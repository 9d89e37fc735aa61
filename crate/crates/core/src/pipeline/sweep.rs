use serde::{Deserialize, Serialize};

use super::data::{synth_sparse_dataset, AmplitudeLaw, SparseDatasetSpec};
use crate::diffusion::{sample_stochastic_coupled, GaussianScore, ScoreModel, VpSchedule};
use crate::error::{Error, Result};
use crate::recovery::{fista_solve_with, LassoProblem, SolveOptions};
use crate::stats::median;
use crate::tensor::matrix::dist2;
use crate::tensor::rng::RngStream;
use crate::tensor::sketch::gaussian_sketch;

/// Complexity model behind a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostModel {
    /// `max(m, d/m + √S)`.
    Theoretical,
    Measured(MeasuredSweep),
}

/// Settings for the measured sweep. At each `m` two step counts are
/// measured on scaled-down problems, both against the same absolute `ℓ₂`
/// tolerance `ε`:
///
/// * `k'`: Euler–Maruyama steps until the Brownian-coupled RMS distance to
///   a fine reference run (`max_sampler_steps`) falls to `ε`, for
///   standardized latents (analytic `N(0, I_m)` score), interpolated
///   log-linearly between powers of two;
/// * `k`: FISTA iterations until `|x_k − x|₂ ≤ ε` on exact measurements
///   `y = A x` of `S`-sparse signals, median over problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasuredSweep {
    pub tolerance: f64,
    pub chains: usize,
    /// Power of two.
    pub max_sampler_steps: usize,
    pub problems: usize,
    pub max_fista_iter: usize,
    /// `λ` as a fraction of `|Aᵀy|_∞`.
    pub lambda_fraction: f64,
    pub amplitude: AmplitudeLaw,
    pub seed: u64,
}

impl Default for MeasuredSweep {
    fn default() -> Self {
        MeasuredSweep {
            tolerance: 1e-2,
            chains: 32,
            max_sampler_steps: 16_384,
            problems: 16,
            max_fista_iter: 20_000,
            lambda_fraction: 1e-4,
            amplitude: AmplitudeLaw::UniformSigned,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub d: usize,
    pub sparsity: usize,
    pub m: Vec<usize>,
    pub cost: Vec<f64>,
    /// Measured `k'` per grid point.
    pub sampler_steps: Option<Vec<f64>>,
    /// Measured `k` per grid point.
    pub recovery_steps: Option<Vec<f64>>,
    /// False where the median problem hit `max_fista_iter`; the cost there
    /// is a lower bound.
    pub recovery_converged: Option<Vec<bool>>,
    pub argmin_m: usize,
    pub min_cost: f64,
}

impl SweepCurve {
    fn new(d: usize, sparsity: usize, m: Vec<usize>, cost: Vec<f64>) -> Self {
        let (i, &c) = cost
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty grid");
        SweepCurve {
            d,
            sparsity,
            argmin_m: m[i],
            min_cost: c,
            m,
            cost,
            sampler_steps: None,
            recovery_steps: None,
            recovery_converged: None,
        }
    }

    /// Non-increasing up to the minimum, non-decreasing after it, with the
    /// minimum strictly inside the grid.
    pub fn is_u_shaped(&self) -> bool {
        let i = self.m.iter().position(|&m| m == self.argmin_m).unwrap_or(0);
        if i == 0 || i + 1 == self.cost.len() {
            return false;
        }
        self.cost[..=i].windows(2).all(|w| w[1] <= w[0]) && self.cost[i..].windows(2).all(|w| w[1] >= w[0])
    }

    /// Header `m,cost,sampler_steps,recovery_steps,recovery_converged`;
    /// measured-only columns are empty for the theoretical model.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "m,cost,sampler_steps,recovery_steps,recovery_converged")?;
        let opt = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map_or(String::new(), |v| format!("{:?}", v[i]));
        for i in 0..self.m.len() {
            let conv = self.recovery_converged.as_ref().map_or(String::new(), |v| v[i].to_string());
            writeln!(
                w,
                "{},{:?},{},{},{}",
                self.m[i],
                self.cost[i],
                opt(&self.sampler_steps, i),
                opt(&self.recovery_steps, i),
                conv
            )?;
        }
        Ok(())
    }
}

pub fn theoretical_cost(d: usize, sparsity: usize, m: usize) -> f64 {
    (m as f64).max(d as f64 / m as f64 + (sparsity as f64).sqrt())
}

/// Evaluates the cost model over `m_grid` (every entry in `(S, d)`).
pub fn optimal_m_sweep(d: usize, sparsity: usize, m_grid: &[usize], model: &CostModel) -> Result<SweepCurve> {
    if m_grid.is_empty() {
        return Err(Error::invalid("empty m grid"));
    }
    if let Some(m) = m_grid.iter().find(|&&m| m <= sparsity || m >= d) {
        return Err(Error::invalid(format!("grid point m = {m} outside (S, d) = ({sparsity}, {d})")));
    }
    match model {
        CostModel::Theoretical => {
            let cost = m_grid.iter().map(|&m| theoretical_cost(d, sparsity, m)).collect();
            Ok(SweepCurve::new(d, sparsity, m_grid.to_vec(), cost))
        }
        CostModel::Measured(cfg) => measured_sweep(d, sparsity, m_grid, cfg),
    }
}

/// Dense integer grid `S+1, …, d−1`.
pub fn dense_grid(d: usize, sparsity: usize) -> Vec<usize> {
    (sparsity + 1..d).collect()
}

fn measured_sweep(d: usize, sparsity: usize, m_grid: &[usize], cfg: &MeasuredSweep) -> Result<SweepCurve> {
    if !cfg.max_sampler_steps.is_power_of_two() || cfg.max_sampler_steps < 4 {
        return Err(Error::invalid("max_sampler_steps must be a power of two of at least 4"));
    }
    if cfg.chains == 0 || cfg.problems == 0 || cfg.max_fista_iter == 0 || !(cfg.tolerance > 0.0) {
        return Err(Error::invalid("measured sweep needs positive counts and tolerance"));
    }
    let root = RngStream::new(cfg.seed);
    let signals = synth_sparse_dataset(&SparseDatasetSpec {
        d,
        sparsity,
        n: cfg.problems,
        amplitude: cfg.amplitude,
        seed: root.labeled("signals").seed,
    })?;
    let mut ks = Vec::new();
    let mut kprimes = Vec::new();
    for &m in m_grid {
        kprimes.push(sampler_steps_to_tolerance(m, cfg, &root)?);
        ks.push(recovery_steps_to_tolerance(m, d, &signals, cfg, &root)?);
    }
    let cost = ks.iter().zip(&kprimes).map(|(a, b)| a + b).collect();
    let mut curve = SweepCurve::new(d, sparsity, m_grid.to_vec(), cost);
    curve.recovery_converged = Some(ks.iter().map(|&k| k < cfg.max_fista_iter as f64).collect());
    curve.sampler_steps = Some(kprimes);
    curve.recovery_steps = Some(ks);
    Ok(curve)
}

fn sampler_steps_to_tolerance(m: usize, cfg: &MeasuredSweep, root: &RngStream) -> Result<f64> {
    let sched = VpSchedule::default();
    let model = ScoreModel::Gaussian(GaussianScore::standard(m));
    let ladder: Vec<usize> = std::iter::successors(Some(2usize), |k| Some(k * 2))
        .take_while(|&k| k <= cfg.max_sampler_steps)
        .collect();
    let seed = root.labeled("sampler").substream(m as u64).seed;
    let runs = sample_stochastic_coupled(&model, &sched, &ladder, cfg.chains, seed)?;
    let reference = runs.last().expect("ladder");
    let errs: Vec<f64> = runs[..runs.len() - 1]
        .iter()
        .map(|run| {
            let ss: f64 = run.iter().zip(reference).map(|(a, b)| dist2(a, b).powi(2)).sum();
            (ss / cfg.chains as f64).sqrt()
        })
        .collect();
    let tol = cfg.tolerance;
    if errs[0] <= tol {
        return Ok(ladder[0] as f64);
    }
    for i in 1..errs.len() {
        if errs[i] <= tol {
            let (k0, k1) = (ladder[i - 1] as f64, ladder[i] as f64);
            let p = (errs[i - 1] / errs[i]).ln() / (k1 / k0).ln();
            return Ok(k0 * (errs[i - 1] / tol).powf(1.0 / p));
        }
    }
    Err(Error::NoConvergence {
        what: "sampler steps-to-tolerance",
        iterations: cfg.max_sampler_steps,
        last_estimate: *errs.last().unwrap(),
    })
}

fn recovery_steps_to_tolerance(m: usize, d: usize, signals: &[Vec<f64>], cfg: &MeasuredSweep, root: &RngStream) -> Result<f64> {
    let sketch = gaussian_sketch(m, d, &root.labeled("sketch").substream(((m as u64) << 32) | d as u64))?;
    let opts = SolveOptions {
        max_iter: cfg.max_fista_iter,
        tol: f64::MIN_POSITIVE,
        ..SolveOptions::default()
    };
    let mut iters = Vec::with_capacity(signals.len());
    for x in signals {
        let y = sketch.apply(x)?;
        let lam_max = crate::tensor::matrix::norm_inf(&sketch.matrix().tr_mul_vec(&y));
        let p = LassoProblem::from_sketch(&sketch, y, cfg.lambda_fraction * lam_max.max(f64::MIN_POSITIVE))?;
        let r = fista_solve_with(&p, None, &opts, |_, xk| dist2(xk, x) <= cfg.tolerance)?;
        iters.push(r.trace.iterations() as f64);
    }
    Ok(median(&iters))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theoretical_minimum_at_root_d() {
        let c = optimal_m_sweep(10_000, 1, &dense_grid(10_000, 1), &CostModel::Theoretical).unwrap();
        assert_eq!(c.argmin_m, 100);
        assert_eq!(c.min_cost, 101.0);
        assert!(c.is_u_shaped());
    }

    #[test]
    fn cost_at_root_d() {
        assert_eq!(theoretical_cost(10_000, 1, 100), 101.0);
        assert_eq!(theoretical_cost(400, 4, 20), 22.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(optimal_m_sweep(100, 2, &[], &CostModel::Theoretical).is_err());
        assert!(optimal_m_sweep(100, 2, &[2, 10], &CostModel::Theoretical).is_err());
        assert!(optimal_m_sweep(100, 2, &[10, 100], &CostModel::Theoretical).is_err());
    }

    #[test]
    fn u_shape_detection() {
        let mut c = SweepCurve::new(10, 1, vec![2, 3, 4, 5], vec![4.0, 2.0, 2.5, 3.0]);
        assert!(c.is_u_shaped());
        c.cost = vec![4.0, 2.0, 2.5, 2.4];
        assert!(!c.is_u_shaped());
        let c = SweepCurve::new(10, 1, vec![2, 3], vec![1.0, 2.0]);
        assert!(!c.is_u_shaped());
    }
}
