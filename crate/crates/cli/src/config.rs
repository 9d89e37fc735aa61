use std::path::{Path, PathBuf};

use csdm_core::diffusion::{SamplerConfig, TrainConfig, VpSchedule};
use csdm_core::pipeline::{CostModel, PipelineConfig, SparseDatasetSpec};
use csdm_core::recovery::SolveOptions;
use csdm_core::stress::{BacktestConfig, FactorMarketSpec, NetworkFitConfig, PcGenerationConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sketch,
    Recover,
    Train,
    Sample,
    Pipeline,
    SweepM,
    Pca,
    Ssa,
    Bench,
    MakeData,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sketch => "sketch",
            Command::Recover => "recover",
            Command::Train => "train",
            Command::Sample => "sample",
            Command::Pipeline => "pipeline",
            Command::SweepM => "sweep-m",
            Command::Pca => "pca",
            Command::Ssa => "ssa",
            Command::Bench => "bench",
            Command::MakeData => "make-data",
        }
    }
}

/// One invocation of the command-line tool.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub quiet: bool,
}

/// Contents of a configuration file: one section per subcommand, each
/// optional and filled with defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub sketch: SketchSection,
    pub recover: RecoverSection,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub pipeline: PipelineConfig,
    #[serde(rename = "sweep-m")]
    pub sweep_m: SweepSection,
    pub pca: PcaSection,
    pub ssa: SsaSection,
    pub bench: BenchSection,
    #[serde(rename = "make-data")]
    pub make_data: MakeDataSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SketchSection {
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    /// Also write the dense matrix as CSV.
    pub export_matrix: bool,
}

impl Default for SketchSection {
    fn default() -> Self {
        SketchSection {
            m: 256,
            d: 1024,
            seed: 0,
            export_matrix: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverSection {
    /// Sketch description as written by `sketch`.
    pub sketch: Option<PathBuf>,
    /// Latent vectors, one per CSV row.
    pub latents: Option<PathBuf>,
    pub lambda: f64,
    pub fista: SolveOptions,
    pub debias: bool,
}

impl Default for RecoverSection {
    fn default() -> Self {
        RecoverSection {
            sketch: None,
            latents: None,
            lambda: 1e-3,
            fista: SolveOptions::default(),
            debias: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Training vectors, one per CSV row.
    pub data: Option<PathBuf>,
    pub schedule: VpSchedule,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    /// Model file written by `train`.
    pub model: Option<PathBuf>,
    pub n: usize,
    pub sampler: SamplerConfig,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            model: None,
            n: 100,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub d: usize,
    pub sparsity: usize,
    /// Defaults to every integer in `(S, d)`.
    pub grid: Option<Vec<usize>>,
    pub model: CostModel,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            d: 10_000,
            sparsity: 1,
            grid: None,
            model: CostModel::Theoretical,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaSection {
    /// Factor CSV with a leading `date` column.
    pub factors: Option<PathBuf>,
    pub k: usize,
    /// z-score each column before the decomposition.
    pub standardize: bool,
}

impl Default for PcaSection {
    fn default() -> Self {
        PcaSection {
            factors: None,
            k: 6,
            standardize: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorChoice {
    LinearRegression,
    TrainedNetwork,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsaSection {
    pub factors: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    /// Names of the stressed factor columns.
    pub stressed: Vec<String>,
    pub predictor: PredictorChoice,
    pub network: NetworkFitConfig,
    pub backtest: BacktestConfig,
    /// When present, the analysis is repeated on a PC-diffusion generated panel.
    pub generation: Option<PcGenerationConfig>,
}

impl Default for SsaSection {
    fn default() -> Self {
        SsaSection {
            factors: None,
            returns: None,
            stressed: Vec::new(),
            predictor: PredictorChoice::LinearRegression,
            network: NetworkFitConfig::default(),
            backtest: BacktestConfig::default(),
            generation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub m: usize,
    pub d: usize,
    pub sparsity: usize,
    /// Hidden widths of the timed noise network.
    pub hidden: Vec<usize>,
    pub time_features: usize,
    pub sampler_steps: usize,
    pub samples: usize,
    pub lambda_fraction: f64,
    pub fista: SolveOptions,
    pub seed: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            m: 256,
            d: 1024,
            sparsity: 10,
            hidden: vec![128, 128],
            time_features: 16,
            sampler_steps: 500,
            samples: 13,
            lambda_fraction: 1e-2,
            fista: SolveOptions {
                max_iter: 3000,
                tol: 1e-8,
                ..SolveOptions::default()
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Sparse,
    FactorMarket,
    Images,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSource {
    /// IDX image file; synthetic stroke digits when absent.
    pub idx: Option<PathBuf>,
    pub synthetic_count: usize,
    pub synthetic_size: usize,
    pub width: usize,
    pub height: usize,
    pub limit: Option<usize>,
    pub seed: u64,
}

impl Default for ImageSource {
    fn default() -> Self {
        ImageSource {
            idx: None,
            synthetic_count: 100,
            synthetic_size: 28,
            width: 32,
            height: 32,
            limit: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MakeDataSection {
    pub kind: DataKind,
    pub sparse: SparseDatasetSpec,
    /// Also compress the sparse data with a sketch of this many rows.
    pub sketch_m: Option<usize>,
    pub market: FactorMarketSpec,
    pub images: ImageSource,
}

impl Default for MakeDataSection {
    fn default() -> Self {
        MakeDataSection {
            kind: DataKind::Sparse,
            sparse: SparseDatasetSpec::default(),
            sketch_m: None,
            market: FactorMarketSpec::default(),
            images: ImageSource::default(),
        }
    }
}

/// Strict JSON parse; errors carry the path of the offending field.
pub fn parse_config_str(text: &str) -> CliResult<ConfigFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(path, e.into_inner().to_string())
    })
}

pub fn parse_config(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text)
}

fn require(cond: bool, path: &str, message: impl Into<String>) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::config(path, message))
    }
}

fn require_path(p: &Option<PathBuf>, path: &str) -> CliResult<()> {
    require(p.is_some(), path, "a file path is required")
}

fn core_check(r: csdm_core::error::Result<()>, path: &str) -> CliResult<()> {
    r.map_err(|e| CliError::config(path, e.to_string()))
}

impl ConfigFile {
    /// Overrides the seed of the section `command` reads.
    pub fn apply_seed(&mut self, command: Command, seed: u64) {
        match command {
            Command::Sketch => self.sketch.seed = seed,
            Command::Recover => {}
            Command::Train => self.train.config.seed = seed,
            Command::Sample => self.sample.sampler.seed = seed,
            Command::Pipeline => self.pipeline.seed = seed,
            Command::SweepM => {
                if let CostModel::Measured(m) = &mut self.sweep_m.model {
                    m.seed = seed;
                }
            }
            Command::Pca => {}
            Command::Ssa => {
                self.ssa.network.seed = seed;
                if let Some(g) = &mut self.ssa.generation {
                    g.seed = seed;
                }
            }
            Command::Bench => self.bench.seed = seed,
            Command::MakeData => {
                self.make_data.sparse.seed = seed;
                self.make_data.market.seed = seed;
                self.make_data.images.seed = seed;
            }
        }
    }

    /// Checks the section `command` reads.
    pub fn validate(&self, command: Command) -> CliResult<()> {
        match command {
            Command::Sketch => {
                let s = &self.sketch;
                require(s.d > 0, "sketch.d", "must be positive")?;
                require(s.m > 0 && s.m <= s.d, "sketch.m", format!("must lie in 1..={}", s.d))
            }
            Command::Recover => {
                let r = &self.recover;
                require_path(&r.sketch, "recover.sketch")?;
                require_path(&r.latents, "recover.latents")?;
                require(r.lambda > 0.0 && r.lambda.is_finite(), "recover.lambda", "must be positive")?;
                require(r.fista.max_iter > 0, "recover.fista.max_iter", "must be positive")
            }
            Command::Train => {
                require_path(&self.train.data, "train.data")?;
                core_check(self.train.schedule.validate(), "train.schedule")?;
                core_check(self.train.config.validate(&self.train.schedule), "train.config")
            }
            Command::Sample => {
                require_path(&self.sample.model, "sample.model")?;
                require(self.sample.n > 0, "sample.n", "must be positive")?;
                core_check(self.sample.sampler.validate(), "sample.sampler")
            }
            Command::Pipeline => {
                let p = &self.pipeline;
                require(p.d > 0, "pipeline.d", "must be positive")?;
                require(p.m > 0 && p.m < p.d, "pipeline.m", format!("must lie in 1..{} (below d)", p.d))?;
                require(p.sparsity < p.m, "pipeline.sparsity", format!("must be below m = {}", p.m))?;
                require(p.n_train > 0, "pipeline.n_train", "must be positive")?;
                require(p.n_generate > 0, "pipeline.n_generate", "must be positive")?;
                core_check(p.validate(), "pipeline")
            }
            Command::SweepM => {
                let s = &self.sweep_m;
                require(s.d > s.sparsity + 1, "sweep-m.d", "must exceed sparsity + 1")?;
                if let Some(grid) = &s.grid {
                    for (i, &m) in grid.iter().enumerate() {
                        require(
                            m > s.sparsity && m < s.d,
                            &format!("sweep-m.grid[{i}]"),
                            format!("{m} must lie strictly between S = {} and d = {}", s.sparsity, s.d),
                        )?;
                    }
                }
                Ok(())
            }
            Command::Pca => {
                require_path(&self.pca.factors, "pca.factors")?;
                require(self.pca.k > 0, "pca.k", "must be positive")
            }
            Command::Ssa => {
                let s = &self.ssa;
                require_path(&s.factors, "ssa.factors")?;
                require_path(&s.returns, "ssa.returns")?;
                require(s.backtest.window >= 2, "ssa.backtest.window", "must be at least 2")?;
                require(!s.backtest.kinds.is_empty(), "ssa.backtest.kinds", "must not be empty")
            }
            Command::Bench => {
                let b = &self.bench;
                require(b.d > 0, "bench.d", "must be positive")?;
                require(b.m > b.sparsity && b.m <= b.d, "bench.m", format!("must lie in {}..={}", b.sparsity + 1, b.d))?;
                require(b.samples > csdm_core::pipeline::WARMUP_SAMPLES, "bench.samples", "must exceed the warm-up count")?;
                require(b.sampler_steps > 0, "bench.sampler_steps", "must be positive")?;
                require(b.lambda_fraction > 0.0, "bench.lambda_fraction", "must be positive")
            }
            Command::MakeData => {
                let m = &self.make_data;
                match m.kind {
                    DataKind::Sparse => {
                        require(m.sparse.d > 0, "make-data.sparse.d", "must be positive")?;
                        require(m.sparse.sparsity <= m.sparse.d, "make-data.sparse.sparsity", "must not exceed d")?;
                        if let Some(sm) = m.sketch_m {
                            require(sm > 0 && sm <= m.sparse.d, "make-data.sketch_m", "must lie in 1..=d")?;
                        }
                        Ok(())
                    }
                    DataKind::FactorMarket => {
                        require(m.market.latent > 0, "make-data.market.latent", "must be positive")?;
                        require(m.market.factors >= m.market.latent, "make-data.market.factors", "must be at least latent")
                    }
                    DataKind::Images => {
                        let im = &m.images;
                        require(im.width > 0 && im.height > 0, "make-data.images", "width and height must be positive")?;
                        if im.idx.is_none() {
                            require(im.synthetic_size > 0, "make-data.images.synthetic_size", "must be positive")?;
                            require(
                                im.width >= im.synthetic_size && im.height >= im.synthetic_size,
                                "make-data.images.width",
                                "must not be below the source size",
                            )?;
                        }
                        Ok(())
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = parse_config_str("{}").unwrap();
        assert_eq!(c, ConfigFile::default());
        assert_eq!(c.pipeline.m, 256);
        c.validate(Command::Pipeline).unwrap();
        c.validate(Command::SweepM).unwrap();
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = parse_config_str(r#"{"pipeline": {"fista": {"max_iters": 5}}}"#).unwrap_err();
        match err {
            CliError::Config { path, message } => {
                assert_eq!(path, "pipeline.fista.max_iters");
                assert!(message.contains("unknown field"), "{message}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn type_mismatch_names_its_path() {
        let err = parse_config_str(r#"{"sweep-m": {"d": "many"}}"#).unwrap_err();
        assert!(matches!(err, CliError::Config { ref path, .. } if path == "sweep-m.d"), "{err}");
    }

    #[test]
    fn infeasible_m_is_rejected_with_path() {
        let c = parse_config_str(r#"{"pipeline": {"d": 64, "m": 64}}"#).unwrap();
        let err = c.validate(Command::Pipeline).unwrap_err();
        assert!(matches!(err, CliError::Config { ref path, .. } if path == "pipeline.m"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_grid_entry_is_located() {
        let c = parse_config_str(r#"{"sweep-m": {"d": 100, "sparsity": 2, "grid": [10, 2]}}"#).unwrap();
        let err = c.validate(Command::SweepM).unwrap_err();
        assert!(matches!(err, CliError::Config { ref path, .. } if path == "sweep-m.grid[1]"), "{err}");
    }

    #[test]
    fn effective_config_round_trips() {
        let mut c = parse_config_str(r#"{"pipeline": {"d": 128, "m": 32, "sparsity": 3}}"#).unwrap();
        c.apply_seed(Command::Pipeline, 99);
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(parse_config_str(&text).unwrap(), c);
        assert_eq!(c.pipeline.seed, 99);
    }

    #[test]
    fn missing_inputs_are_reported() {
        let c = ConfigFile::default();
        let err = c.validate(Command::Recover).unwrap_err();
        assert!(matches!(err, CliError::Config { ref path, .. } if path == "recover.sketch"), "{err}");
    }
}
