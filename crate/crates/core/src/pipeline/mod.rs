//! The compress / generate / recover pipeline, its timing accounting, and
//! the latent-dimension sweep.

mod data;
mod eval;
mod run;
mod sweep;
mod timing;

pub use data::{compress_dataset, synth_sparse_dataset, AmplitudeLaw, SparseDatasetSpec};
pub use eval::{end_to_end_error, nearest_point, ErrorStats, ERROR_QUANTILES};
pub use run::{
    latent_score, recover_latents, run_pipeline, LambdaPolicy, LambdaReport, PipelineConfig, PipelineReport,
    PipelineRun, Recovery, ResidualReference, ScoreSource, SolverSummary, StageSeconds,
};
pub use sweep::{dense_grid, optimal_m_sweep, theoretical_cost, CostModel, MeasuredSweep, SweepCurve};
pub use timing::{hardware_note, measure_speedup, Stopwatch, TimingReport, WARMUP_SAMPLES};
