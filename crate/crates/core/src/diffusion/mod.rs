//! Variance-preserving diffusion in the latent space: schedule, score
//! models, denoising score matching, and reverse-time samplers.

mod io;
mod metrics;
mod model;
mod sampler;
mod schedule;
mod train;

pub use io::{read_model, write_model, ModelHeader, NetworkHeader, SavedModel};
pub use metrics::{normal_quantile, score_matching_error, w2_empirical, w2_to_quantile_fn, ProbeSet};
pub use model::{analytic_score, time_features, EvalScratch, GaussianScore, NoiseNet, ScoreModel, SpikeMixture};
pub use sampler::{
    em_integrate, heun_integrate, sample, sample_chain, sample_deterministic, sample_stochastic, sample_stochastic_coupled,
    time_grid, write_samples_csv, SamplerConfig, SamplerKind, TimeGrid,
};
pub use schedule::VpSchedule;
pub use train::{
    dsm_draws, dsm_loss, dsm_loss_and_grad, dsm_loss_with_draws, train, DsmDraw, LrSchedule, TrainConfig, TrainOutcome,
    TrainingMeta, Weighting,
};
