use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{subgradient_residual, support_of, LassoProblem};
use crate::error::{Error, Result};
use crate::tensor::linalg::soft_threshold_in_place;
use crate::tensor::matrix::{dot, norm1};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Stop once the subgradient residual is at or below this value.
    pub tol: f64,
    /// Support cut as a fraction of `|x̂|_∞`.
    #[serde(default = "default_support_threshold")]
    pub support_threshold: f64,
}

fn default_support_threshold() -> f64 {
    1e-6
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 5000,
            tol: 1e-8,
            support_threshold: default_support_threshold(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    MaxIter,
    /// A caller-supplied stopping rule fired.
    Callback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    pub objective: f64,
    pub best_objective: f64,
    pub residual: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub entries: Vec<TraceEntry>,
    pub stop_reason: StopReason,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.entries.last().map_or(0, |e| e.k)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.entries.last().map(|e| e.objective)
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.entries.last().map(|e| e.best_objective)
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.entries.last().map(|e| e.residual)
    }

    /// Header `k,objective,best_objective,residual,elapsed_s`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,objective,best_objective,residual,elapsed_s")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{:?},{:?},{:?},{:?}",
                e.k, e.objective, e.best_objective, e.residual, e.elapsed_s
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub x_hat: Vec<f64>,
    pub support: Vec<usize>,
    pub trace: SolverTrace,
    pub debiased: Option<Vec<f64>>,
}

/// `t_{k+1} = (1 + √(1 + 4t_k²)) / 2`
pub fn fista_momentum(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// Reusable buffers and bookkeeping shared by both solvers.
struct Workspace<'p, 'a> {
    p: &'p LassoProblem<'a>,
    resid: Vec<f64>,
    grad: Vec<f64>,
    entries: Vec<TraceEntry>,
    best: f64,
    start: Instant,
}

impl<'p, 'a> Workspace<'p, 'a> {
    fn new(p: &'p LassoProblem<'a>) -> Self {
        Workspace {
            p,
            resid: vec![0.0; p.design().rows()],
            grad: vec![0.0; p.dim()],
            entries: Vec::new(),
            best: f64::INFINITY,
            start: Instant::now(),
        }
    }

    /// `out = SoftThreshold(z − ∇f(z)/L, λ/L)`
    fn prox_into(&mut self, z: &[f64], out: &mut [f64]) {
        let l = self.p.lipschitz();
        self.p.residual_into(z, &mut self.resid);
        self.p.design().tr_mul_vec_into(&self.resid, &mut self.grad);
        for ((o, zi), gi) in out.iter_mut().zip(z).zip(&self.grad) {
            *o = zi - gi / l;
        }
        soft_threshold_in_place(out, self.p.lambda() / l);
    }

    /// Records objective and residual at `x`; returns the residual.
    fn record(&mut self, k: usize, x: &[f64], solver: &'static str) -> Result<f64> {
        self.p.residual_into(x, &mut self.resid);
        self.p.design().tr_mul_vec_into(&self.resid, &mut self.grad);
        let objective = 0.5 * dot(&self.resid, &self.resid) + self.p.lambda() * norm1(x);
        let residual = subgradient_residual(&self.grad, x, self.p.lambda());
        let elapsed = self.start.elapsed().as_secs_f64();
        let elapsed = self.entries.last().map_or(elapsed, |e| elapsed.max(e.elapsed_s));
        if !objective.is_finite() || !residual.is_finite() {
            self.entries.push(TraceEntry {
                k,
                objective,
                best_objective: self.best,
                residual,
                elapsed_s: elapsed,
            });
            return Err(Error::Diverged {
                solver,
                iteration: k,
                trace: Box::new(SolverTrace {
                    entries: std::mem::take(&mut self.entries),
                    stop_reason: StopReason::MaxIter,
                }),
            });
        }
        self.best = self.best.min(objective);
        self.entries.push(TraceEntry {
            k,
            objective,
            best_objective: self.best,
            residual,
            elapsed_s: elapsed,
        });
        Ok(residual)
    }

    fn finish(self, x: Vec<f64>, stop_reason: StopReason, support_threshold: f64) -> RecoveryResult {
        RecoveryResult {
            support: support_of(&x, support_threshold),
            x_hat: x,
            trace: SolverTrace {
                entries: self.entries,
                stop_reason,
            },
            debiased: None,
        }
    }
}

fn validate(p: &LassoProblem<'_>, x0: Option<&[f64]>, opts: &SolveOptions) -> Result<Vec<f64>> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    match x0 {
        Some(x) if x.len() != p.dim() => Err(Error::DimensionMismatch {
            context: "solver start point",
            expected: p.dim(),
            actual: x.len(),
        }),
        Some(x) => Ok(x.to_vec()),
        None => Ok(p.adjoint_start()),
    }
}

/// FISTA with constant step `1/L`:
///
/// ```text
/// y₁ = x₀, t₁ = 1
/// x_k     = p_L(y_k)
/// t_{k+1} = (1 + √(1 + 4t_k²)) / 2
/// y_{k+1} = x_k + ((t_k − 1)/t_{k+1}) (x_k − x_{k−1})
/// ```
///
/// `x0 = None` starts from `Aᵀy`. The trace holds one entry per iteration
/// with the raw and best-so-far objective at `x_k`.
pub fn fista_solve(p: &LassoProblem<'_>, x0: Option<&[f64]>, opts: &SolveOptions) -> Result<RecoveryResult> {
    fista_solve_with(p, x0, opts, |_, _| false)
}

/// [`fista_solve`] that also stops as soon as `stop(k, x_k)` returns true.
pub fn fista_solve_with(
    p: &LassoProblem<'_>,
    x0: Option<&[f64]>,
    opts: &SolveOptions,
    mut stop: impl FnMut(usize, &[f64]) -> bool,
) -> Result<RecoveryResult> {
    let mut x_prev = validate(p, x0, opts)?;
    let mut y = x_prev.clone();
    let mut x = vec![0.0; p.dim()];
    let mut t = 1.0;
    let mut ws = Workspace::new(p);
    for k in 1..=opts.max_iter {
        ws.prox_into(&y, &mut x);
        let t_next = fista_momentum(t);
        let beta = (t - 1.0) / t_next;
        for ((yi, xi), xp) in y.iter_mut().zip(&x).zip(&x_prev) {
            *yi = xi + beta * (xi - xp);
        }
        t = t_next;
        let residual = ws.record(k, &x, "fista")?;
        if residual <= opts.tol {
            return Ok(ws.finish(x, StopReason::Tolerance, opts.support_threshold));
        }
        if stop(k, &x) {
            return Ok(ws.finish(x, StopReason::Callback, opts.support_threshold));
        }
        std::mem::swap(&mut x_prev, &mut x);
    }
    // after the final swap the latest iterate sits in x_prev
    Ok(ws.finish(x_prev, StopReason::MaxIter, opts.support_threshold))
}

/// Un-accelerated proximal gradient, `x_k = p_L(x_{k−1})`.
pub fn ista_solve(p: &LassoProblem<'_>, x0: Option<&[f64]>, opts: &SolveOptions) -> Result<RecoveryResult> {
    let mut x_prev = validate(p, x0, opts)?;
    let mut x = vec![0.0; p.dim()];
    let mut ws = Workspace::new(p);
    for k in 1..=opts.max_iter {
        ws.prox_into(&x_prev, &mut x);
        let residual = ws.record(k, &x, "ista")?;
        if residual <= opts.tol {
            return Ok(ws.finish(x, StopReason::Tolerance, opts.support_threshold));
        }
        std::mem::swap(&mut x_prev, &mut x);
    }
    Ok(ws.finish(x_prev, StopReason::MaxIter, opts.support_threshold))
}

/// Warm-started FISTA along a decreasing `λ` schedule; the result is the
/// solve at the last `λ`, with the traces concatenated (iteration counts
/// continue across stages).
pub fn fista_continuation(
    p: &LassoProblem<'_>,
    lambdas: &[f64],
    opts: &SolveOptions,
) -> Result<RecoveryResult> {
    if lambdas.is_empty() {
        return Err(Error::invalid("empty lambda schedule"));
    }
    let mut x: Option<Vec<f64>> = None;
    let mut entries = Vec::new();
    let mut last = None;
    for &lam in lambdas {
        let stage = p.with_lambda(lam)?;
        let mut r = fista_solve(&stage, x.as_deref(), opts)?;
        let offset = entries.last().map_or(0, |e: &TraceEntry| e.k);
        let t_off = entries.last().map_or(0.0, |e: &TraceEntry| e.elapsed_s);
        entries.extend(r.trace.entries.iter().map(|e| TraceEntry {
            k: e.k + offset,
            elapsed_s: e.elapsed_s + t_off,
            ..*e
        }));
        x = Some(r.x_hat.clone());
        r.trace.entries = Vec::new();
        last = Some(r);
    }
    let mut r = last.expect("non-empty schedule");
    r.trace.entries = entries;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::{kkt_residual, lasso_objective};
    use crate::tensor::linalg::soft_threshold;
    use crate::tensor::matrix::Matrix;
    use crate::tensor::rng::{normal_vec, RngStream};

    #[test]
    fn momentum_sequence() {
        let t2 = fista_momentum(1.0);
        assert!((t2 - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((t2 - 1.618034).abs() < 1e-6);
        let t3 = fista_momentum(t2);
        assert!((t3 - (1.0 + (1.0 + 4.0 * t2 * t2).sqrt()) / 2.0).abs() < 1e-15);
        assert!((t3 - 2.193527).abs() < 1e-6);
    }

    #[test]
    fn identity_design_converges_to_soft_threshold() {
        let a = Matrix::identity(10);
        let mut g = RngStream::new(4).generator();
        let y: Vec<f64> = normal_vec(&mut g, 10).iter().map(|v| 2.0 * v).collect();
        let p = LassoProblem::new(&a, y.clone(), 0.5).unwrap();
        let opts = SolveOptions {
            max_iter: 200,
            tol: 1e-12,
            ..Default::default()
        };
        let expect = soft_threshold(&y, 0.5).unwrap();
        for solver in [fista_solve, ista_solve] {
            let r = solver(&p, Some(&[0.0; 10]), &opts).unwrap();
            for (u, v) in r.x_hat.iter().zip(&expect) {
                assert!((u - v).abs() < 1e-8);
            }
            assert!(r.trace.iterations() <= 200);
        }
    }

    #[test]
    fn trace_is_ordered_and_best_is_monotone() {
        let mut g = RngStream::new(8).generator();
        let a = Matrix::new(15, 30, normal_vec(&mut g, 450)).unwrap();
        let y = normal_vec(&mut g, 15);
        let p = LassoProblem::new(&a, y, 0.2).unwrap();
        let r = fista_solve(&p, None, &SolveOptions { max_iter: 300, tol: 1e-10, ..Default::default() }).unwrap();
        for w in r.trace.entries.windows(2) {
            assert!(w[1].k > w[0].k);
            assert!(w[1].elapsed_s >= w[0].elapsed_s);
            assert!(w[1].best_objective <= w[0].best_objective);
        }
        let last = r.trace.entries.last().unwrap();
        assert!((last.objective - lasso_objective(&p, &r.x_hat).unwrap()).abs() < 1e-12);
        if r.trace.stop_reason == StopReason::Tolerance {
            assert!(kkt_residual(&p, &r.x_hat).unwrap() <= 10.0 * 1e-10);
        }
    }

    #[test]
    fn ista_objective_never_increases() {
        for seed in 0..20 {
            let mut g = RngStream::new(100 + seed).generator();
            let a = Matrix::new(12, 25, normal_vec(&mut g, 300)).unwrap();
            let y = normal_vec(&mut g, 12);
            let p = LassoProblem::new(&a, y, 0.1).unwrap();
            let r = ista_solve(&p, None, &SolveOptions { max_iter: 200, tol: 1e-12, ..Default::default() }).unwrap();
            for w in r.trace.entries.windows(2) {
                assert!(w[1].objective <= w[0].objective + 1e-12 * w[0].objective.abs());
            }
        }
    }

    #[test]
    fn stops_at_max_iter_and_rejects_bad_input() {
        let a = Matrix::identity(3);
        let p = LassoProblem::new(&a, vec![1.0, 2.0, 3.0], 0.1).unwrap();
        let r = fista_solve(&p, Some(&[10.0, -10.0, 0.0]), &SolveOptions { max_iter: 1, tol: 1e-300, ..Default::default() });
        let r = r.unwrap();
        assert_eq!(r.trace.stop_reason, StopReason::MaxIter);
        assert_eq!(r.trace.iterations(), 1);
        assert!(fista_solve(&p, Some(&[0.0; 2]), &SolveOptions::default()).is_err());
        assert!(fista_solve(&p, None, &SolveOptions { tol: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn trace_csv_header() {
        let a = Matrix::identity(2);
        let p = LassoProblem::new(&a, vec![1.0, 0.0], 0.5).unwrap();
        let r = fista_solve(&p, None, &SolveOptions::default()).unwrap();
        let mut buf = Vec::new();
        r.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,objective,best_objective,residual,elapsed_s\n"));
        assert_eq!(text.lines().count(), 1 + r.trace.entries.len());
    }

    #[test]
    fn continuation_reaches_final_lambda() {
        let mut g = RngStream::new(21).generator();
        let a = Matrix::new(20, 40, normal_vec(&mut g, 800)).unwrap();
        let y = normal_vec(&mut g, 20);
        let p = LassoProblem::new(&a, y, 1.0).unwrap();
        let opts = SolveOptions { max_iter: 5000, tol: 1e-10, ..Default::default() };
        let r = fista_continuation(&p, &[1.0, 0.3, 0.05], &opts).unwrap();
        let fin = p.with_lambda(0.05).unwrap();
        assert!(kkt_residual(&fin, &r.x_hat).unwrap() <= 1e-9);
        for w in r.trace.entries.windows(2) {
            assert!(w[1].k > w[0].k);
        }
    }
}
