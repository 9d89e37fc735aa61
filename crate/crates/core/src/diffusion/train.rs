use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{EvalScratch, NoiseNet, ScoreModel};
use super::schedule::VpSchedule;
use crate::error::{Error, Result};
use crate::nn::{Adam, Tape};
use crate::tensor::rng::{normal_vec, RngStream};

/// Choice of `λ_t`; the loss on `|ε_θ − ε|²` is weighted by `λ_t/σ_t²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `λ_t = σ_t²`: unit weight on the noise residual.
    SigmaSquared,
    /// `λ_t = g(t)² = β(t)`: weight `β(t)/σ_t²`.
    Elbo,
}

impl Weighting {
    pub fn weight(self, sched: &VpSchedule, t: f64) -> f64 {
        match self {
            Weighting::SigmaSquared => 1.0,
            Weighting::Elbo => {
                let (_, s) = sched.alpha_sigma_unchecked(t);
                sched.beta(t) / (s * s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to `final_lr_fraction` of it.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub final_lr_fraction: f64,
    pub weighting: Weighting,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub time_features: usize,
    /// Training times are drawn from this range; defaults to `[t_min, T]`.
    pub time_range: Option<[f64; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            steps: 4000,
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            final_lr_fraction: 0.05,
            weighting: Weighting::SigmaSquared,
            seed: 0,
            hidden: vec![128, 128],
            time_features: 16,
            time_range: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, sched: &VpSchedule) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::invalid("batch size and step count must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::invalid("learning rate must be positive, final fraction in [0, 1]"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        let [lo, hi] = self.time_range(sched);
        if !(lo > 0.0 && lo < hi && hi <= sched.horizon) {
            return Err(Error::invalid(format!("time range [{lo}, {hi}] must lie in (0, T]")));
        }
        Ok(())
    }

    pub fn time_range(&self, sched: &VpSchedule) -> [f64; 2] {
        self.time_range.unwrap_or([sched.t_min, sched.horizon])
    }

    fn lr_at(&self, step: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let p = step as f64 / self.steps.max(1) as f64;
                let f = self.final_lr_fraction + (1.0 - self.final_lr_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
                self.learning_rate * f
            }
        }
    }
}

/// Per-sample noise draw for the score-matching loss.
#[derive(Clone, Debug, PartialEq)]
pub struct DsmDraw {
    pub t: f64,
    pub eps: Vec<f64>,
}

/// Draw `i` comes from sub-stream `i`, so pairing a sample with its draw
/// does not depend on where it sits in the batch.
pub fn dsm_draws(sched: &VpSchedule, cfg: &TrainConfig, m: usize, n: usize, rng: &RngStream) -> Vec<DsmDraw> {
    let [lo, hi] = cfg.time_range(sched);
    (0..n)
        .map(|i| {
            let mut g = rng.substream(i as u64).generator();
            let t = g.random_range(lo..=hi);
            DsmDraw { t, eps: normal_vec(&mut g, m) }
        })
        .collect()
}

fn check_batch(batch: &[Vec<f64>], m: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(x) = batch.iter().find(|x| x.len() != m) {
        return Err(Error::DimensionMismatch {
            context: "training sample",
            expected: m,
            actual: x.len(),
        });
    }
    Ok(())
}

/// Monte-Carlo score-matching loss `mean_i w(t_i)|ε(t_i, α x_i + σ ε_i) − ε_i|²`.
pub fn dsm_loss_with_draws(
    sched: &VpSchedule,
    model: &ScoreModel,
    batch: &[Vec<f64>],
    draws: &[DsmDraw],
    cfg: &TrainConfig,
) -> Result<f64> {
    let m = model.dim();
    check_batch(batch, m)?;
    if draws.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            context: "loss draws",
            expected: batch.len(),
            actual: draws.len(),
        });
    }
    let mut scratch = EvalScratch::default();
    let mut xt = vec![0.0; m];
    let mut pred = vec![0.0; m];
    let mut total = 0.0;
    for (x0, dr) in batch.iter().zip(draws) {
        let (a, s) = sched.alpha_sigma(dr.t)?;
        for i in 0..m {
            xt[i] = a * x0[i] + s * dr.eps[i];
        }
        model.noise_into(sched, dr.t, &xt, &mut pred, &mut scratch);
        let r: f64 = pred.iter().zip(&dr.eps).map(|(p, e)| (p - e) * (p - e)).sum();
        total += cfg.weighting.weight(sched, dr.t) * r;
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { stage: "dsm loss", step: 0 });
    }
    Ok(loss)
}

pub fn dsm_loss(sched: &VpSchedule, model: &ScoreModel, batch: &[Vec<f64>], cfg: &TrainConfig, rng: &RngStream) -> Result<f64> {
    let draws = dsm_draws(sched, cfg, model.dim(), batch.len(), rng);
    dsm_loss_with_draws(sched, model, batch, &draws, cfg)
}

/// Loss and its gradient with respect to the network parameters.
pub fn dsm_loss_and_grad(
    sched: &VpSchedule,
    net: &NoiseNet,
    batch: &[Vec<f64>],
    draws: &[DsmDraw],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; net.mlp.num_params()];
    let mut bufs = GradBuffers::default();
    let loss = accumulate_grad(sched, net, batch.iter(), draws, cfg, &mut grad, &mut bufs)?;
    Ok((loss, grad))
}

#[derive(Default)]
struct GradBuffers {
    tape: Tape,
    input: Vec<f64>,
    xt: Vec<f64>,
    g_out: Vec<f64>,
}

fn accumulate_grad<'a>(
    sched: &VpSchedule,
    net: &NoiseNet,
    batch: impl ExactSizeIterator<Item = &'a Vec<f64>>,
    draws: &[DsmDraw],
    cfg: &TrainConfig,
    grad: &mut [f64],
    b: &mut GradBuffers,
) -> Result<f64> {
    let n = batch.len();
    let m = net.dim();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    b.xt.resize(m, 0.0);
    b.g_out.resize(m, 0.0);
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for (x0, dr) in batch.zip(draws) {
        if x0.len() != m {
            return Err(Error::DimensionMismatch {
                context: "training sample",
                expected: m,
                actual: x0.len(),
            });
        }
        let (a, s) = sched.alpha_sigma(dr.t)?;
        for i in 0..m {
            b.xt[i] = a * x0[i] + s * dr.eps[i];
        }
        net.build_input(sched, dr.t, &b.xt, &mut b.input);
        net.mlp.forward_tape(&b.input, &mut b.tape);
        let (skip, scale) = net.precondition(sched, dr.t);
        let w = cfg.weighting.weight(sched, dr.t);
        let mut r = 0.0;
        for (i, (f, e)) in b.tape.output().iter().zip(&dr.eps).enumerate() {
            let diff = skip * b.xt[i] + scale * f - e;
            r += diff * diff;
            b.g_out[i] = 2.0 * w * diff * scale * inv_n;
        }
        total += w * r;
        net.mlp.backward(&mut b.tape, &b.g_out, grad, false);
    }
    Ok(total * inv_n)
}

/// Provenance stored with a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub config: TrainConfig,
    pub n_data: usize,
    /// Mean loss over the first and last tenth of the run.
    pub initial_window_loss: f64,
    pub final_window_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ScoreModel,
    pub losses: Vec<f64>,
    pub meta: TrainingMeta,
}

/// Adam on the score-matching loss with minibatches drawn with replacement.
pub fn train(sched: &VpSchedule, data: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    sched.validate()?;
    cfg.validate(sched)?;
    let m = data.first().map(Vec::len).ok_or_else(|| Error::invalid("training data is empty"))?;
    if m == 0 {
        return Err(Error::invalid("training vectors have zero length"));
    }
    check_batch(data, m)?;
    let second_moment = (data.iter().flat_map(|x| x.iter()).map(|v| v * v).sum::<f64>() / (data.len() * m) as f64).max(1e-8);

    let root = RngStream::new(cfg.seed);
    let mut net = NoiseNet::new(m, &cfg.hidden, cfg.time_features, second_moment, &root.labeled("init"))?;
    let mut opt = Adam::new(net.mlp.num_params());
    let mut pick = root.labeled("batch").generator();
    let noise = root.labeled("noise");
    let mut grad = vec![0.0; net.mlp.num_params()];
    let mut bufs = GradBuffers::default();
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut idx = vec![0usize; cfg.batch_size];
    for step in 0..cfg.steps {
        idx.iter_mut().for_each(|i| *i = pick.random_range(0..data.len()));
        let draws = dsm_draws(sched, cfg, m, cfg.batch_size, &noise.substream(step as u64));
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = accumulate_grad(sched, &net, idx.iter().map(|&i| &data[i]), &draws, cfg, &mut grad, &mut bufs)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { stage: "train", step });
        }
        opt.step(net.mlp.params_mut(), &grad, cfg.lr_at(step));
        losses.push(loss);
        if step % 500 == 0 {
            log::debug!("train step {step}: loss {loss:.5}");
        }
    }
    let w = (cfg.steps / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let meta = TrainingMeta {
        config: cfg.clone(),
        n_data: data.len(),
        initial_window_loss: mean(&losses[..w]),
        final_window_loss: mean(&losses[losses.len() - w..]),
    };
    Ok(TrainOutcome {
        model: ScoreModel::Network(net),
        losses,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::model::{GaussianScore, SpikeMixture};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![8],
            time_features: 4,
            ..Default::default()
        }
    }

    #[test]
    fn point_mass_predictor_has_zero_loss() {
        let s = VpSchedule::default();
        let c = vec![0.5, -1.0, 2.0];
        let model = ScoreModel::SpikeMixture(SpikeMixture::point_mass(c.clone()));
        let batch = vec![c; 16];
        let loss = dsm_loss(&s, &model, &batch, &TrainConfig::default(), &RngStream::new(1)).unwrap();
        assert!(loss < 1e-20, "{loss}");
    }

    #[test]
    fn zero_predictor_loss_is_dimension() {
        let s = VpSchedule::default();
        // N(0, 10¹²I) data has noise prediction below 1e-11 everywhere used here
        let cov = crate::tensor::matrix::Matrix::diag(&[1e12; 4]);
        let model = ScoreModel::Gaussian(GaussianScore::new(vec![0.0; 4], cov).unwrap());
        let batch = vec![vec![0.3; 4]; 20_000];
        let loss = dsm_loss(&s, &model, &batch, &TrainConfig::default(), &RngStream::new(2)).unwrap();
        // χ²₄ has variance 8
        let se = (8.0f64 / 20_000.0).sqrt();
        assert!((loss - 4.0).abs() < 4.0 * se, "{loss}");
    }

    #[test]
    fn untrained_network_is_gaussian_baseline() {
        let s = VpSchedule::default();
        let net = ScoreModel::Network(NoiseNet::new(3, &[8], 4, 1.0, &RngStream::new(1)).unwrap());
        let x = [0.4, -2.0, 1.1];
        for t in [0.01, 0.3, 1.0] {
            let sc = net.score(&s, t, &x).unwrap();
            for (a, b) in sc.iter().zip(&x) {
                assert!((a + b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_invariant_to_batch_order() {
        let s = VpSchedule::default();
        let net = NoiseNet::new(2, &[8], 4, 1.0, &RngStream::new(1)).unwrap();
        let mut net = net;
        net.mlp.params_mut().iter_mut().enumerate().for_each(|(i, p)| *p = ((i * 7919) % 13) as f64 / 13.0 - 0.5);
        let model = ScoreModel::Network(net);
        let cfg = tiny_cfg();
        let batch: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.1, -(i as f64)]).collect();
        let draws = dsm_draws(&s, &cfg, 2, 9, &RngStream::new(5));
        let a = dsm_loss_with_draws(&s, &model, &batch, &draws, &cfg).unwrap();
        let perm = [4, 1, 8, 0, 3, 7, 2, 6, 5];
        let pb: Vec<_> = perm.iter().map(|&i| batch[i].clone()).collect();
        let pd: Vec<_> = perm.iter().map(|&i| draws[i].clone()).collect();
        let b = dsm_loss_with_draws(&s, &model, &pb, &pd, &cfg).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn empty_batch_is_rejected() {
        let s = VpSchedule::default();
        let model = ScoreModel::SpikeMixture(SpikeMixture::point_mass(vec![1.0]));
        assert!(dsm_loss(&s, &model, &[], &TrainConfig::default(), &RngStream::new(1)).is_err());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig { steps: 100, ..Default::default() };
        assert!((cfg.lr_at(0) - 1e-3).abs() < 1e-15);
        assert!((cfg.lr_at(100) - 5e-5).abs() < 1e-15);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let s = VpSchedule::default();
        let data: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let cfg = TrainConfig { steps: 30, batch_size: 8, ..tiny_cfg() };
        let a = train(&s, &data, &cfg).unwrap();
        let b = train(&s, &data, &cfg).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.model, b.model);
    }
}
