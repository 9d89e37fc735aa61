use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::{compress_dataset, synth_sparse_dataset, AmplitudeLaw, SparseDatasetSpec};
use super::eval::{end_to_end_error, nearest_point, ErrorStats};
use super::timing::{measure_speedup, Stopwatch, TimingReport};
use crate::diffusion::{
    sample_chain, time_grid, train, GaussianScore, SamplerConfig, SamplerKind, ScoreModel, SpikeMixture, TimeGrid,
    TrainConfig, TrainingMeta, VpSchedule,
};
use crate::error::{Error, Result};
use crate::recovery::{debias, fista_solve, kkt_residual, LassoProblem, SolveOptions, SolverTrace, StopReason};
use crate::stats::{median, Summary};
use crate::tensor::matrix::{dist2, norm_inf, Matrix};
use crate::tensor::rng::RngStream;
use crate::tensor::sketch::{gaussian_sketch, SketchOperator};

/// Where the latent score comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    /// Noise network trained on the compressed training set.
    Trained,
    /// Exact score of a Gaussian fitted to the compressed training set.
    AnalyticGaussian,
    /// Exact score of the empirical distribution of the compressed training set.
    AnalyticEmpirical,
}

/// Compressed points the latent residual `σ̂` is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualReference {
    /// A fresh draw of `n_train` points from the data law.
    HeldOut,
    Training,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LambdaPolicy {
    Fixed {
        value: f64,
    },
    /// `σ √(2 ln d)` for a known per-coordinate latent noise level `σ`.
    Universal {
        sigma: f64,
    },
    /// `σ̂/√m · √(2 ln d)` where `σ̂` is the median distance from a generated
    /// latent to its nearest reference latent, bounded below by
    /// `min_fraction` times the median `λ_max` of the generated latents.
    Estimated {
        reference: ResidualReference,
        min_fraction: f64,
    },
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::Estimated {
            reference: ResidualReference::Training,
            min_fraction: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub d: usize,
    pub m: usize,
    pub sparsity: usize,
    pub amplitude: AmplitudeLaw,
    pub n_train: usize,
    pub n_generate: usize,
    /// Master seed; data, sketch, training and sampling streams derive from it.
    /// The `seed` fields of `train` and `sampler` are overwritten with the
    /// derived values.
    pub seed: u64,
    pub schedule: VpSchedule,
    pub score: ScoreSource,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub fista: SolveOptions,
    pub lambda: LambdaPolicy,
    pub debias: bool,
    /// Exact compressed training points recovered to measure the solver floor.
    pub floor_samples: usize,
    /// Relative threshold for support statistics.
    pub support_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            d: 1024,
            m: 256,
            sparsity: 10,
            amplitude: AmplitudeLaw::UniformSigned,
            n_train: 2000,
            n_generate: 100,
            seed: 0,
            schedule: VpSchedule::default(),
            score: ScoreSource::Trained,
            train: TrainConfig::default(),
            sampler: SamplerConfig {
                kind: SamplerKind::Stochastic,
                steps: 500,
                grid: TimeGrid::Exponential,
                seed: 0,
            },
            fista: SolveOptions {
                max_iter: 3000,
                tol: 1e-8,
                ..SolveOptions::default()
            },
            lambda: LambdaPolicy::default(),
            debias: false,
            floor_samples: 100,
            support_threshold: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.n_train == 0 || self.n_generate == 0 {
            return Err(Error::invalid("d, m, n_train and n_generate must be positive"));
        }
        if self.m >= self.d {
            return Err(Error::invalid(format!("m = {} must be below d = {}", self.m, self.d)));
        }
        if self.sparsity > self.m {
            return Err(Error::invalid(format!("sparsity {} exceeds m = {}", self.sparsity, self.m)));
        }
        if self.fista.max_iter == 0 || !(self.fista.tol >= 0.0) {
            return Err(Error::invalid("fista needs max_iter > 0 and tol >= 0"));
        }
        if !(0.0..1.0).contains(&self.support_threshold) {
            return Err(Error::invalid("support_threshold must lie in [0, 1)"));
        }
        match self.lambda {
            LambdaPolicy::Fixed { value } if !(value > 0.0) => return Err(Error::invalid("fixed lambda must be positive")),
            LambdaPolicy::Universal { sigma } if !(sigma > 0.0) => return Err(Error::invalid("sigma must be positive")),
            LambdaPolicy::Estimated { min_fraction, .. } if !(min_fraction > 0.0 && min_fraction < 1.0) => {
                return Err(Error::invalid("min_fraction must lie in (0, 1)"))
            }
            _ => {}
        }
        self.schedule.validate()?;
        self.sampler.validate()?;
        if self.score == ScoreSource::Trained {
            self.train.validate(&self.schedule)?;
        }
        Ok(())
    }

    fn root(&self) -> RngStream {
        RngStream::new(self.seed)
    }

    pub fn dataset_spec(&self) -> SparseDatasetSpec {
        SparseDatasetSpec {
            d: self.d,
            sparsity: self.sparsity,
            n: self.n_train,
            amplitude: self.amplitude,
            seed: self.root().labeled("data").seed,
        }
    }

    fn held_out_spec(&self) -> SparseDatasetSpec {
        SparseDatasetSpec {
            seed: self.root().labeled("held-out").seed,
            ..self.dataset_spec()
        }
    }

    /// The sketch depends only on the master seed and `(m, d)`.
    pub fn sketch_stream(&self) -> RngStream {
        self.root().labeled("sketch").substream(((self.m as u64) << 32) | self.d as u64)
    }

    /// Copy with the derived training and sampling seeds filled in.
    pub fn effective(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.train.seed = self.root().labeled("train").seed;
        c.sampler.seed = self.root().labeled("sample").seed;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub value: f64,
    /// Median nearest-reference latent distance; absent for fixed policies.
    pub sigma_hat: Option<f64>,
    pub sigma_per_coordinate: Option<f64>,
    pub median_lambda_max: f64,
    /// Distribution of nearest-reference latent distances.
    pub residual_to_reference: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub median_iterations: f64,
    pub max_iterations: usize,
    pub converged_fraction: f64,
    pub median_kkt_residual: f64,
    /// `|A x̂ − ỹ|₂` over samples.
    pub latent_residual: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSeconds {
    pub data: f64,
    pub sketch: f64,
    pub score: f64,
    pub sample: f64,
    pub recover: f64,
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub score_kind: String,
    pub training: Option<TrainingMeta>,
    pub lambda: LambdaReport,
    pub timing: TimingReport,
    pub stage_seconds: StageSeconds,
    /// Recovered samples against the training set.
    pub recovery: ErrorStats,
    pub solver: SolverSummary,
    /// Exact compressed training points recovered with the same `λ`.
    pub floor: Option<ErrorStats>,
    pub floor_solver: Option<SolverSummary>,
}

impl PipelineReport {
    /// Copy with every wall-clock field zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> PipelineReport {
        let mut r = self.clone();
        r.timing.t_diff_m = 0.0;
        r.timing.t_cs = 0.0;
        r.timing.t_diff_d_estimated = 0.0;
        r.timing.speedup = 0.0;
        r.stage_seconds = StageSeconds {
            data: 0.0,
            sketch: 0.0,
            score: 0.0,
            sample: 0.0,
            recover: 0.0,
            floor: 0.0,
        };
        r
    }
}

/// Everything a pipeline run produces.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub sketch: SketchOperator,
    pub training_data: Vec<Vec<f64>>,
    pub latents: Vec<Vec<f64>>,
    pub recovered: Vec<Vec<f64>>,
    pub traces: Vec<SolverTrace>,
}

/// Output of [`recover_latents`].
#[derive(Clone, Debug)]
pub struct Recovery {
    pub estimates: Vec<Vec<f64>>,
    pub traces: Vec<SolverTrace>,
    pub kkt: Vec<f64>,
    pub latent_residual: Vec<f64>,
    pub stopwatch: Stopwatch,
}

impl Recovery {
    pub fn summary(&self) -> Result<SolverSummary> {
        let iters: Vec<f64> = self.traces.iter().map(|t| t.iterations() as f64).collect();
        let conv = self.traces.iter().filter(|t| t.stop_reason == StopReason::Tolerance).count();
        Ok(SolverSummary {
            median_iterations: median(&iters),
            max_iterations: self.traces.iter().map(SolverTrace::iterations).max().unwrap_or(0),
            converged_fraction: conv as f64 / self.traces.len().max(1) as f64,
            median_kkt_residual: median(&self.kkt),
            latent_residual: Summary::new(&self.latent_residual, &super::eval::ERROR_QUANTILES)?,
        })
    }
}

/// Solves the Lasso for each latent with a common `λ`, timing each solve.
pub fn recover_latents(
    sketch: &SketchOperator,
    latents: &[Vec<f64>],
    lambda: f64,
    opts: &SolveOptions,
    debias_support: bool,
) -> Result<Recovery> {
    let mut out = Recovery {
        estimates: Vec::with_capacity(latents.len()),
        traces: Vec::with_capacity(latents.len()),
        kkt: Vec::with_capacity(latents.len()),
        latent_residual: Vec::with_capacity(latents.len()),
        stopwatch: Stopwatch::default(),
    };
    for y in latents {
        let p = LassoProblem::from_sketch(sketch, y.clone(), lambda)?;
        let r = out.stopwatch.time(|| -> Result<_> {
            let mut r = fista_solve(&p, None, opts)?;
            if debias_support {
                r.debiased = Some(debias(&r.x_hat, &p, opts.support_threshold)?);
            }
            Ok(r)
        })?;
        out.kkt.push(kkt_residual(&p, &r.x_hat)?);
        let x = r.debiased.clone().unwrap_or_else(|| r.x_hat.clone());
        out.latent_residual.push(dist2(&sketch.apply(&x)?, y));
        out.estimates.push(x);
        out.traces.push(r.trace);
    }
    Ok(out)
}

/// Builds the latent score model named by `source`.
pub fn latent_score(
    source: ScoreSource,
    sched: &VpSchedule,
    latents: &[Vec<f64>],
    train_cfg: &TrainConfig,
) -> Result<(ScoreModel, Option<TrainingMeta>)> {
    Ok(match source {
        ScoreSource::Trained => {
            let out = train(sched, latents, train_cfg)?;
            (out.model, Some(out.meta))
        }
        ScoreSource::AnalyticGaussian => (ScoreModel::Gaussian(GaussianScore::fit(latents)?), None),
        ScoreSource::AnalyticEmpirical => {
            let rows = Matrix::from_rows(latents)?;
            (ScoreModel::SpikeMixture(SpikeMixture::new(rows, None)?), None)
        }
    })
}

/// Sketch, latent score, latent sampling, Lasso recovery.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let cfg = cfg.effective();
    let sched = cfg.schedule.clone();
    let clock = Instant::now();

    let data = synth_sparse_dataset(&cfg.dataset_spec()).map_err(|e| e.in_stage("data"))?;
    let t_data = clock.elapsed().as_secs_f64();

    let sketch = gaussian_sketch(cfg.m, cfg.d, &cfg.sketch_stream()).map_err(|e| e.in_stage("sketch"))?;
    let latents = compress_dataset(&data, &sketch).map_err(|e| e.in_stage("sketch"))?;
    let t_sketch = clock.elapsed().as_secs_f64();

    let (model, training) = latent_score(cfg.score, &sched, &latents, &cfg.train).map_err(|e| e.in_stage("score"))?;
    let t_score = clock.elapsed().as_secs_f64();

    let grid = time_grid(&sched, cfg.sampler.steps, cfg.sampler.grid)?;
    let mut sample_watch = Stopwatch::default();
    let generated = (0..cfg.n_generate)
        .map(|i| sample_watch.time(|| sample_chain(&model, &sched, &cfg.sampler, &grid, i)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("sample"))?;
    let t_sample = clock.elapsed().as_secs_f64();

    let lambda = choose_lambda(&cfg, &sketch, &generated, &latents)?;
    let rec = recover_latents(&sketch, &generated, lambda.value, &cfg.fista, cfg.debias).map_err(|e| e.in_stage("recover"))?;
    let recovery = end_to_end_error(&rec.estimates, &data, cfg.support_threshold)?;
    let solver = rec.summary()?;
    let t_recover = clock.elapsed().as_secs_f64();

    let (floor, floor_solver) = if cfg.floor_samples > 0 {
        let n = cfg.floor_samples.min(cfg.n_train);
        let exact = &latents[..n];
        let fr = recover_latents(&sketch, exact, lambda.value, &cfg.fista, cfg.debias).map_err(|e| e.in_stage("floor"))?;
        (
            Some(end_to_end_error(&fr.estimates, &data, cfg.support_threshold)?),
            Some(fr.summary()?),
        )
    } else {
        (None, None)
    };
    let t_floor = clock.elapsed().as_secs_f64();

    let timing = measure_speedup(
        sample_watch.median_after_warmup().max(f64::MIN_POSITIVE),
        rec.stopwatch.median_after_warmup(),
        cfg.m,
        cfg.d,
    )?;
    let report = PipelineReport {
        score_kind: model.kind().to_string(),
        training,
        lambda,
        timing,
        stage_seconds: StageSeconds {
            data: t_data,
            sketch: t_sketch - t_data,
            score: t_score - t_sketch,
            sample: t_sample - t_score,
            recover: t_recover - t_sample,
            floor: t_floor - t_recover,
        },
        recovery,
        solver,
        floor,
        floor_solver,
        config: cfg,
    };
    Ok(PipelineRun {
        report,
        sketch,
        training_data: data,
        latents: generated,
        recovered: rec.estimates,
        traces: rec.traces,
    })
}

fn choose_lambda(cfg: &PipelineConfig, sketch: &SketchOperator, generated: &[Vec<f64>], train_latents: &[Vec<f64>]) -> Result<LambdaReport> {
    let held_out;
    let reference: &[Vec<f64>] = match cfg.lambda {
        LambdaPolicy::Estimated {
            reference: ResidualReference::HeldOut,
            ..
        } => {
            held_out = compress_dataset(&synth_sparse_dataset(&cfg.held_out_spec())?, sketch)?;
            &held_out
        }
        _ => train_latents,
    };
    let dists: Vec<f64> = generated.iter().map(|y| nearest_point(y, reference).1.sqrt()).collect();
    let lmax: Vec<f64> = generated.iter().map(|y| norm_inf(&sketch.matrix().tr_mul_vec(y))).collect();
    let median_lambda_max = median(&lmax);
    let universal = |s: f64| crate::recovery::universal_lambda(s, cfg.d);
    let (value, sigma_hat, sigma_per_coordinate) = match cfg.lambda {
        LambdaPolicy::Fixed { value } => (value, None, None),
        LambdaPolicy::Universal { sigma } => (universal(sigma), None, Some(sigma)),
        LambdaPolicy::Estimated { min_fraction, .. } => {
            let s_hat = median(&dists);
            let s_coord = s_hat / (cfg.m as f64).sqrt();
            (universal(s_coord).max(min_fraction * median_lambda_max), Some(s_hat), Some(s_coord))
        }
    };
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::NonFinite { stage: "lambda selection", step: 0 });
    }
    Ok(LambdaReport {
        value,
        sigma_hat,
        sigma_per_coordinate,
        median_lambda_max,
        residual_to_reference: Summary::new(&dists, &super::eval::ERROR_QUANTILES)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_infeasible_dimensions() {
        let mut c = PipelineConfig {
            m: 1024,
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
        c.m = 8;
        c.sparsity = 9;
        assert!(c.validate().is_err());
    }

    #[test]
    fn lambda_policy_json_is_strict() {
        let p: LambdaPolicy = serde_json::from_str(r#"{"kind": "fixed", "value": 0.1}"#).unwrap();
        assert_eq!(p, LambdaPolicy::Fixed { value: 0.1 });
        assert!(serde_json::from_str::<LambdaPolicy>(r#"{"kind": "fixed", "value": 0.1, "x": 1}"#).is_err());
    }

    #[test]
    fn sketch_stream_depends_on_shape_only() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            n_train: 7,
            ..a.clone()
        };
        let c = PipelineConfig { d: 2048, ..a.clone() };
        assert_eq!(a.sketch_stream(), b.sketch_stream());
        assert_ne!(a.sketch_stream(), c.sketch_stream());
    }
}
