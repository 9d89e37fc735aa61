use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backtest::{rolling_backtest, BacktestConfig, StressReport};
use super::panel::{FactorPanel, ReturnPanel, Standardizer};
use super::pca::{pca_fit, PcaModel};
use super::portfolio::PortfolioKind;
use super::scenario::{predict_returns, InputMap, Predictor, Scenario};
use crate::diffusion::{sample_chain, time_grid, train, SamplerConfig, SamplerKind, TimeGrid, TrainConfig, TrainingMeta, VpSchedule};
use crate::error::{Error, Result};
use crate::tensor::matrix::Matrix;
use crate::tensor::rng::{normal_vec, standard_normal, RngStream};

/// Factor market driven by a few latent factors `f_t`:
/// `X_t = L f_t + factor_noise·e_t` and
/// `Y_t = drift + return_scale·Γ f_t + return_noise·η_t`.
/// The latent factors are Gaussian with a calm and a crisis regime; crisis
/// periods have wider dispersion and a negative shift in the first factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorMarketSpec {
    pub latent: usize,
    pub factors: usize,
    pub assets: usize,
    pub periods: usize,
    pub factor_noise: f64,
    pub drift: f64,
    pub return_scale: f64,
    pub return_noise: f64,
    pub crisis_probability: f64,
    pub seed: u64,
}

impl Default for FactorMarketSpec {
    fn default() -> Self {
        FactorMarketSpec {
            latent: 3,
            factors: 12,
            assets: 5,
            periods: 480,
            factor_noise: 0.3,
            drift: 0.008,
            return_scale: 0.02,
            return_noise: 0.01,
            crisis_probability: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticMarket {
    pub factors: FactorPanel,
    pub returns: ReturnPanel,
    /// `factors × latent`.
    pub loadings: Matrix,
    /// `assets × latent`.
    pub betas: Matrix,
    pub latent: Vec<Vec<f64>>,
}

fn month_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{:04}-{:02}", 1970 + i / 12, i % 12 + 1)).collect()
}

pub fn synthetic_factor_market(spec: &FactorMarketSpec) -> Result<SyntheticMarket> {
    if spec.latent == 0 || spec.factors < spec.latent || spec.assets == 0 || spec.periods < 3 {
        return Err(Error::invalid("synthetic market needs 0 < latent ≤ factors, assets > 0 and at least 3 periods"));
    }
    if !(0.0..=1.0).contains(&spec.crisis_probability) {
        return Err(Error::invalid("crisis probability must lie in [0, 1]"));
    }
    let root = RngStream::new(spec.seed);
    let mut g = root.labeled("loadings").generator();
    let loadings = Matrix::from_fn(spec.factors, spec.latent, |_, _| standard_normal(&mut g));
    let betas = Matrix::from_fn(spec.assets, spec.latent, |_, _| standard_normal(&mut g));
    let mut g = root.labeled("paths").generator();
    let mut latent = Vec::with_capacity(spec.periods);
    let mut x_rows = Vec::with_capacity(spec.periods);
    let mut y_rows = Vec::with_capacity(spec.periods);
    for _ in 0..spec.periods {
        let crisis = g.random::<f64>() < spec.crisis_probability;
        let mut f: Vec<f64> = normal_vec(&mut g, spec.latent);
        let scale = if crisis { 2.0 } else { 0.85 };
        f.iter_mut().for_each(|v| *v *= scale);
        if crisis {
            f[0] -= 1.5;
        }
        let mut x = loadings.mul_vec(&f);
        x.iter_mut().for_each(|v| *v += spec.factor_noise * standard_normal(&mut g));
        let mut y = betas.mul_vec(&f);
        y.iter_mut()
            .for_each(|v| *v = spec.drift + spec.return_scale * *v + spec.return_noise * standard_normal(&mut g));
        latent.push(f);
        x_rows.push(x);
        y_rows.push(y);
    }
    let times = month_labels(spec.periods);
    let factors = FactorPanel::new(
        times.clone(),
        (0..spec.factors).map(|i| format!("factor{i}")).collect(),
        Matrix::from_rows(&x_rows)?,
    )?;
    let returns = FactorPanel::new(
        times,
        (0..spec.assets).map(|i| format!("asset{i}")).collect(),
        Matrix::from_rows(&y_rows)?,
    )?;
    Ok(SyntheticMarket {
        factors,
        returns,
        loadings,
        betas,
        latent,
    })
}

/// Generation of a factor and return panel through a diffusion model on the
/// principal components of the standardized factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcGenerationConfig {
    pub k: usize,
    /// Generated periods; defaults to the length of the input panel.
    pub periods: Option<usize>,
    pub schedule: VpSchedule,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for PcGenerationConfig {
    fn default() -> Self {
        PcGenerationConfig {
            k: 3,
            periods: None,
            schedule: VpSchedule::default(),
            train: TrainConfig {
                hidden: vec![64, 64],
                steps: 3000,
                ..TrainConfig::default()
            },
            sampler: SamplerConfig {
                kind: SamplerKind::Stochastic,
                steps: 200,
                grid: TimeGrid::Exponential,
                seed: 0,
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedMarket {
    pub factors: FactorPanel,
    pub returns: ReturnPanel,
    pub standardizer: Standardizer,
    pub pca: PcaModel,
    /// Returns as a function of the principal components of a factor vector.
    pub pc_predictor: Predictor,
    pub training: TrainingMeta,
}

/// Trains on the unit-variance principal components of `factors`, samples
/// new components, decodes them to factors, and pairs each generated period
/// with `pc_predictor(components)` plus a residual of the real fit drawn
/// without replacement (recycled when more periods are generated).
pub fn generate_market(factors: &FactorPanel, returns: &ReturnPanel, cfg: &PcGenerationConfig) -> Result<GeneratedMarket> {
    factors.check_aligned(returns)?;
    let root = RngStream::new(cfg.seed);
    let x = factors.rows();
    let y = returns.rows();
    let standardizer = Standardizer::fit(&x)?;
    let z_std: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
    let pca = pca_fit(&z_std, cfg.k)?;
    let pc_scale: Vec<f64> = pca.variances.iter().map(|v| v.sqrt()).collect();
    let pcs: Vec<Vec<f64>> = z_std
        .iter()
        .map(|r| Ok(pca.encode(r)?.iter().zip(&pc_scale).map(|(v, s)| v / s).collect()))
        .collect::<Result<_>>()?;
    let train_cfg = TrainConfig {
        seed: root.labeled("train").seed,
        ..cfg.train.clone()
    };
    let outcome = train(&cfg.schedule, &pcs, &train_cfg)?;
    let sampler = SamplerConfig {
        seed: root.labeled("sample").seed,
        ..cfg.sampler.clone()
    };
    let grid = time_grid(&cfg.schedule, sampler.steps, sampler.grid)?;
    let n = cfg.periods.unwrap_or(factors.len());
    let input = InputMap::Pca {
        standardizer: standardizer.clone(),
        pca: pca.clone(),
    };
    let pc_predictor = Predictor::fit_linear(input, &x, &y)?;
    let residuals: Vec<Vec<f64>> = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| Ok(yi.iter().zip(predict_returns(&pc_predictor, xi)?).map(|(a, b)| a - b).collect()))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..residuals.len()).collect();
    order.shuffle(&mut root.labeled("residuals").generator());
    let mut gx = Vec::with_capacity(n);
    let mut gy = Vec::with_capacity(n);
    for i in 0..n {
        let u = sample_chain(&outcome.model, &cfg.schedule, &sampler, &grid, i)?;
        let z: Vec<f64> = u.iter().zip(&pc_scale).map(|(v, s)| v * s).collect();
        let xi = standardizer.invert(&pca.decode(&z)?);
        let mut yi = predict_returns(&pc_predictor, &xi)?;
        yi.iter_mut().zip(&residuals[order[i % order.len()]]).for_each(|(a, r)| *a += r);
        gx.push(xi);
        gy.push(yi);
    }
    let times: Vec<String> = (0..n).map(|i| format!("g{i:06}")).collect();
    Ok(GeneratedMarket {
        factors: FactorPanel::new(times.clone(), factors.names.clone(), Matrix::from_rows(&gx)?)?,
        returns: FactorPanel::new(times, returns.names.clone(), Matrix::from_rows(&gy)?)?,
        standardizer,
        pca,
        pc_predictor,
        training: outcome.meta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindGap {
    pub kind: PortfolioKind,
    pub mean_gap: f64,
    /// `(level, |Q_real − Q_generated|)`.
    pub quantile_gaps: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub explained_variance: Vec<f64>,
    pub training: TrainingMeta,
    pub real: StressReport,
    pub generated: StressReport,
    pub gaps: Vec<KindGap>,
}

impl FidelityReport {
    pub fn max_mean_gap(&self) -> f64 {
        self.gaps.iter().map(|g| g.mean_gap).fold(0.0, f64::max)
    }

    pub fn max_quantile_gap(&self, level: f64) -> f64 {
        self.gaps
            .iter()
            .flat_map(|g| g.quantile_gaps.iter().filter(|(p, _)| *p == level).map(|(_, v)| *v))
            .fold(0.0, f64::max)
    }
}

/// Scenario analysis on the real panels and on a PC-diffusion generated
/// panel, each with a least-squares factor predictor fitted to its own data,
/// and the gaps between the stressed return distributions.
pub fn ssa_fidelity(
    factors: &FactorPanel,
    returns: &ReturnPanel,
    scenario: &Scenario,
    backtest: &BacktestConfig,
    generation: &PcGenerationConfig,
) -> Result<FidelityReport> {
    let real_pred = Predictor::fit_linear(InputMap::Identity, &factors.rows(), &returns.rows())?;
    let real = rolling_backtest(factors, returns, scenario, &real_pred, backtest)?;
    let gen = generate_market(factors, returns, generation)?;
    let gen_pred = Predictor::fit_linear(InputMap::Identity, &gen.factors.rows(), &gen.returns.rows())?;
    let generated = rolling_backtest(&gen.factors, &gen.returns, scenario, &gen_pred, backtest)?;
    let gaps = real
        .series
        .iter()
        .zip(&generated.series)
        .map(|(a, b)| KindGap {
            kind: a.kind,
            mean_gap: (a.stressed_stats.mean - b.stressed_stats.mean).abs(),
            quantile_gaps: a
                .stressed_stats
                .quantiles
                .iter()
                .zip(&b.stressed_stats.quantiles)
                .map(|(&(p, qa), &(_, qb))| (p, (qa - qb).abs()))
                .collect(),
        })
        .collect();
    Ok(FidelityReport {
        explained_variance: gen.pca.explained_variance.clone(),
        training: gen.training,
        real,
        generated,
        gaps,
    })
}
