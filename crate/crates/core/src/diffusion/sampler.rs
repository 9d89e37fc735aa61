use std::io::Write;

use serde::{Deserialize, Serialize};

use super::model::{EvalScratch, ScoreModel};
use super::schedule::VpSchedule;
use crate::error::{Error, Result};
use crate::tensor::rng::{standard_normal, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    /// Euler–Maruyama on the reverse-time SDE.
    Stochastic,
    /// Heun on the probability-flow ODE.
    Deterministic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeGrid {
    #[default]
    Uniform,
    /// Geometric spacing, denser near `t_min`.
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Number of reverse steps `k'`.
    pub steps: usize,
    pub grid: TimeGrid,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Stochastic,
            steps: 500,
            grid: TimeGrid::Exponential,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("sampler needs at least one step"));
        }
        Ok(())
    }
}

/// Decreasing times `T = t_0 > … > t_{k'} = t_min`.
pub fn time_grid(sched: &VpSchedule, steps: usize, grid: TimeGrid) -> Result<Vec<f64>> {
    sched.validate()?;
    if steps == 0 {
        return Err(Error::invalid("time grid needs at least one step"));
    }
    let (hi, lo) = (sched.horizon, sched.t_min);
    let k = steps as f64;
    let mut ts: Vec<f64> = match grid {
        TimeGrid::Uniform => (0..=steps).map(|i| hi - (hi - lo) * i as f64 / k).collect(),
        TimeGrid::Exponential => {
            let (lh, ll) = (hi.ln(), lo.ln());
            (0..=steps).map(|i| (lh - (lh - ll) * i as f64 / k).exp()).collect()
        }
    };
    ts[0] = hi;
    ts[steps] = lo;
    if ts.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid(format!("time grid with {steps} steps is not strictly decreasing")));
    }
    Ok(ts)
}

/// Reverse-time drift `½β(t)y + c·β(t)s(t, y)`; `c = 1` for the SDE and
/// `c = ½` for the probability-flow ODE.
fn reverse_drift(
    model: &ScoreModel,
    sched: &VpSchedule,
    t: f64,
    y: &[f64],
    c: f64,
    out: &mut [f64],
    scratch: &mut EvalScratch,
) {
    model.score_into(sched, t, y, out, scratch);
    let beta = sched.beta(t);
    for (o, yi) in out.iter_mut().zip(y) {
        *o = beta * (0.5 * yi + c * *o);
    }
}

/// Euler–Maruyama along `grid`, with `dw(k, buf)` filling the Brownian
/// increment for step `k` (variance `t_k − t_{k+1}` per coordinate).
pub fn em_integrate(
    model: &ScoreModel,
    sched: &VpSchedule,
    grid: &[f64],
    y: &mut [f64],
    mut dw: impl FnMut(usize, &mut [f64]),
) -> Result<()> {
    let m = y.len();
    let mut drift = vec![0.0; m];
    let mut inc = vec![0.0; m];
    let mut scratch = EvalScratch::default();
    for k in 0..grid.len() - 1 {
        let (t, h) = (grid[k], grid[k] - grid[k + 1]);
        reverse_drift(model, sched, t, y, 1.0, &mut drift, &mut scratch);
        dw(k, &mut inc);
        let g = sched.beta(t).sqrt();
        for i in 0..m {
            y[i] += h * drift[i] + g * inc[i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: "stochastic sampler", step: k });
        }
    }
    Ok(())
}

/// Heun's method for the probability-flow ODE along `grid`.
pub fn heun_integrate(model: &ScoreModel, sched: &VpSchedule, grid: &[f64], y: &mut [f64]) -> Result<()> {
    let m = y.len();
    let mut d1 = vec![0.0; m];
    let mut d2 = vec![0.0; m];
    let mut pred = vec![0.0; m];
    let mut scratch = EvalScratch::default();
    for k in 0..grid.len() - 1 {
        let (t, tn) = (grid[k], grid[k + 1]);
        let h = t - tn;
        reverse_drift(model, sched, t, y, 0.5, &mut d1, &mut scratch);
        for i in 0..m {
            pred[i] = y[i] + h * d1[i];
        }
        reverse_drift(model, sched, tn, &pred, 0.5, &mut d2, &mut scratch);
        for i in 0..m {
            y[i] += 0.5 * h * (d1[i] + d2[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: "deterministic sampler", step: k });
        }
    }
    Ok(())
}

fn chain_start(cfg: &SamplerConfig, chain: usize, m: usize) -> (rand_chacha::ChaCha20Rng, Vec<f64>) {
    let mut g = RngStream::new(cfg.seed).substream(chain as u64).generator();
    let y = (0..m).map(|_| standard_normal(&mut g)).collect();
    (g, y)
}

fn check_kind(cfg: &SamplerConfig, want: SamplerKind) -> Result<()> {
    cfg.validate()?;
    if cfg.kind != want {
        return Err(Error::invalid(format!("sampler config kind {:?} used with the {want:?} sampler", cfg.kind)));
    }
    Ok(())
}

/// Chain `chain` of the sampler described by `cfg`, run along `grid`
/// (from [`time_grid`]). Chain `i` draws from sub-stream `i` of `cfg.seed`,
/// so any chain can be produced on its own.
pub fn sample_chain(model: &ScoreModel, sched: &VpSchedule, cfg: &SamplerConfig, grid: &[f64], chain: usize) -> Result<Vec<f64>> {
    let (mut g, mut y) = chain_start(cfg, chain, model.dim());
    match cfg.kind {
        SamplerKind::Stochastic => em_integrate(model, sched, grid, &mut y, |k, buf| {
            let sd = (grid[k] - grid[k + 1]).sqrt();
            buf.iter_mut().for_each(|b| *b = sd * standard_normal(&mut g));
        })?,
        SamplerKind::Deterministic => heun_integrate(model, sched, grid, &mut y)?,
    }
    Ok(y)
}

/// `n` chains started from `N(0, I)` at `T`, integrated to `t_min`.
pub fn sample_stochastic(model: &ScoreModel, sched: &VpSchedule, cfg: &SamplerConfig, n: usize) -> Result<Vec<Vec<f64>>> {
    check_kind(cfg, SamplerKind::Stochastic)?;
    let grid = time_grid(sched, cfg.steps, cfg.grid)?;
    (0..n).map(|c| sample_chain(model, sched, cfg, &grid, c)).collect()
}

pub fn sample_deterministic(model: &ScoreModel, sched: &VpSchedule, cfg: &SamplerConfig, n: usize) -> Result<Vec<Vec<f64>>> {
    check_kind(cfg, SamplerKind::Deterministic)?;
    let grid = time_grid(sched, cfg.steps, cfg.grid)?;
    (0..n).map(|c| sample_chain(model, sched, cfg, &grid, c)).collect()
}

pub fn sample(model: &ScoreModel, sched: &VpSchedule, cfg: &SamplerConfig, n: usize) -> Result<Vec<Vec<f64>>> {
    match cfg.kind {
        SamplerKind::Stochastic => sample_stochastic(model, sched, cfg, n),
        SamplerKind::Deterministic => sample_deterministic(model, sched, cfg, n),
    }
}

/// Stochastic samples at several step counts driven by the same Brownian
/// paths on a uniform grid; every entry of `steps` must divide the largest.
/// Returns one sample set per entry of `steps`.
pub fn sample_stochastic_coupled(
    model: &ScoreModel,
    sched: &VpSchedule,
    steps: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let fine = *steps.iter().max().ok_or_else(|| Error::invalid("no step counts"))?;
    if steps.iter().any(|&k| k == 0 || fine % k != 0) {
        return Err(Error::invalid("coupled step counts must divide the largest"));
    }
    let m = model.dim();
    let h = (sched.horizon - sched.t_min) / fine as f64;
    let grids: Vec<Vec<f64>> = steps.iter().map(|&k| time_grid(sched, k, TimeGrid::Uniform)).collect::<Result<_>>()?;
    let mut out: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(n); steps.len()];
    let cfg = SamplerConfig { kind: SamplerKind::Stochastic, steps: fine, grid: TimeGrid::Uniform, seed };
    for c in 0..n {
        let (mut g, y0) = chain_start(&cfg, c, m);
        let mut path = vec![0.0; fine * m];
        path.iter_mut().for_each(|p| *p = h.sqrt() * standard_normal(&mut g));
        for (s, &k) in steps.iter().enumerate() {
            let r = fine / k;
            let mut y = y0.clone();
            em_integrate(model, sched, &grids[s], &mut y, |step, buf| {
                buf.iter_mut().for_each(|b| *b = 0.0);
                for j in step * r..(step + 1) * r {
                    for (b, p) in buf.iter_mut().zip(&path[j * m..(j + 1) * m]) {
                        *b += p;
                    }
                }
            })?;
            out[s].push(y);
        }
    }
    Ok(out)
}

/// One sample per row, shortest round-trip float formatting.
pub fn write_samples_csv<W: Write>(mut w: W, samples: &[Vec<f64>]) -> std::io::Result<()> {
    for s in samples {
        let line: Vec<String> = s.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
