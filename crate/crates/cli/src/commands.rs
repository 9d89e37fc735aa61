use std::io::BufReader;
use std::path::{Path, PathBuf};

use csdm_core::diffusion::{
    read_model, sample, sample_chain, time_grid, train, write_model, NoiseNet, SamplerConfig, SamplerKind, ScoreModel, TimeGrid,
    TrainingMeta, VpSchedule,
};
use csdm_core::pipeline::{
    compress_dataset, dense_grid, measure_speedup, optimal_m_sweep, recover_latents, run_pipeline,
    synth_sparse_dataset, AmplitudeLaw, SolverSummary, SparseDatasetSpec, Stopwatch, TimingReport,
};
use csdm_core::stress::{
    pca_fit, rolling_backtest, ssa_fidelity, synthetic_factor_market, FactorPanel, InputMap, PcaModel, Predictor, Scenario,
    Standardizer,
};
use csdm_core::tensor::rng::RngStream;
use csdm_core::tensor::sketch::{gaussian_sketch, SketchOperator, SketchSpec};
use csdm_core::tensor::matrix::norm_inf;
use serde::Serialize;

use crate::config::{
    parse_config, Command, ConfigFile, DataKind, PredictorChoice, RunConfig,
};
use crate::error::{CliError, CliResult};
use crate::images::{load_idx_images, synthetic_digits, upscale_nearest, write_idx_images};
use crate::report::{emit_report, read_rows_csv, rows_csv, to_json, write_file, Table};

pub const EFFECTIVE_CONFIG: &str = "effective-config.json";

/// Worker cap from `CSDM_THREADS`; every stage runs on one thread, so the
/// value is validated and recorded only.
pub fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var("CSDM_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config("CSDM_THREADS", format!("`{v}` is not a positive integer"))),
        },
    }
}

/// Loads, overrides and validates the configuration, writes the effective
/// configuration, and runs the command. Returns every file written.
pub fn execute(run: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let mut cfg = match &run.config_path {
        Some(p) => parse_config(p)?,
        None => ConfigFile::default(),
    };
    if let Some(seed) = run.seed {
        cfg.apply_seed(run.command, seed);
    }
    cfg.validate(run.command)?;
    if let Some(n) = thread_cap()? {
        log::info!("CSDM_THREADS = {n}; all stages run sequentially");
    }
    std::fs::create_dir_all(&run.out).map_err(|e| CliError::io(&run.out, e))?;
    let eff = run.out.join(EFFECTIVE_CONFIG);
    write_file(&eff, to_json(&cfg)?.as_bytes())?;
    let mut files = vec![eff];
    let out = run.out.as_path();
    files.extend(match run.command {
        Command::Sketch => cmd_sketch(&cfg, out)?,
        Command::Recover => cmd_recover(&cfg, out)?,
        Command::Train => cmd_train(&cfg, out)?,
        Command::Sample => cmd_sample(&cfg, out)?,
        Command::Pipeline => cmd_pipeline(&cfg, out)?,
        Command::SweepM => cmd_sweep(&cfg, out)?,
        Command::Pca => cmd_pca(&cfg, out)?,
        Command::Ssa => cmd_ssa(&cfg, out)?,
        Command::Bench => cmd_bench(&cfg, out)?,
        Command::MakeData => cmd_make_data(&cfg, out)?,
    });
    Ok(files)
}

fn table_from<F>(name: &str, f: F) -> CliResult<Table>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Core(e.into()))?;
    Ok(Table::new(name, buf))
}

fn csv_table(name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Table> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Core(e.into());
    wr.write_record(header).map_err(io)?;
    for r in rows {
        wr.write_record(&r).map_err(io)?;
    }
    let bytes = wr.into_inner().map_err(|e| CliError::Core(std::io::Error::other(e.to_string()).into()))?;
    Ok(Table::new(name, bytes))
}

fn load_panel(path: &Path) -> CliResult<FactorPanel> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    FactorPanel::from_csv(BufReader::new(file)).map_err(|e| {
        if e.is_io() {
            CliError::Core(e)
        } else {
            CliError::data(path, e.to_string())
        }
    })
}

fn load_sketch(path: &Path) -> CliResult<SketchOperator> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let spec: SketchSpec = serde_json::from_str(&text).map_err(|e| CliError::data(path, e.to_string()))?;
    SketchOperator::try_from(spec).map_err(|e| CliError::data(path, e.to_string()))
}

fn cmd_sketch(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let s = &cfg.sketch;
    let op = gaussian_sketch(s.m, s.d, &RngStream::new(s.seed))?;
    let mut tables = Vec::new();
    if s.export_matrix {
        tables.push(table_from("sketch-matrix.csv", |b| op.write_csv(b))?);
    }
    emit_report(out, "sketch", &op.spec(), tables)
}

#[derive(Serialize)]
struct SampleRecord {
    iterations: usize,
    stop_reason: String,
    kkt_residual: f64,
    latent_residual: f64,
}

#[derive(Serialize)]
struct RecoverReport {
    sketch: SketchSpec,
    lambda: f64,
    samples: usize,
    solver: SolverSummary,
    per_sample: Vec<SampleRecord>,
    seconds_per_solve: Vec<f64>,
}

fn cmd_recover(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let r = &cfg.recover;
    let sketch_path = r.sketch.as_deref().expect("validated");
    let latents_path = r.latents.as_deref().expect("validated");
    let sketch = load_sketch(sketch_path)?;
    let latents = read_rows_csv(latents_path)?;
    if latents[0].len() != sketch.m() {
        return Err(CliError::data(
            latents_path,
            format!("latents have {} columns but the sketch has m = {}", latents[0].len(), sketch.m()),
        ));
    }
    let rec = recover_latents(&sketch, &latents, r.lambda, &r.fista, r.debias)?;
    let report = RecoverReport {
        sketch: sketch.spec(),
        lambda: r.lambda,
        samples: latents.len(),
        solver: rec.summary()?,
        per_sample: rec
            .traces
            .iter()
            .zip(&rec.kkt)
            .zip(&rec.latent_residual)
            .map(|((t, &k), &res)| SampleRecord {
                iterations: t.iterations(),
                stop_reason: format!("{:?}", t.stop_reason),
                kkt_residual: k,
                latent_residual: res,
            })
            .collect(),
        seconds_per_solve: rec.stopwatch.laps().to_vec(),
    };
    emit_report(out, "recover", &report, vec![Table::new("recovered.csv", rows_csv(&rec.estimates))])
}

#[derive(Serialize)]
struct TrainReport {
    data: PathBuf,
    dim: usize,
    model_file: PathBuf,
    meta: TrainingMeta,
}

fn cmd_train(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let t = &cfg.train;
    let data_path = t.data.as_deref().expect("validated");
    let data = read_rows_csv(data_path)?;
    let outcome = train(&t.schedule, &data, &t.config)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let model_path = out.join("model.bin");
    let mut buf = Vec::new();
    write_model(&mut buf, &outcome.model, &t.schedule, Some(&outcome.meta))?;
    write_file(&model_path, &buf)?;
    let losses = csv_table(
        "losses.csv",
        &["step".into(), "loss".into()],
        outcome.losses.iter().enumerate().map(|(i, l)| vec![i.to_string(), format!("{l:?}")]),
    )?;
    let report = TrainReport {
        data: data_path.to_path_buf(),
        dim: data[0].len(),
        model_file: model_path.clone(),
        meta: outcome.meta,
    };
    let mut files = vec![model_path];
    files.extend(emit_report(out, "train", &report, vec![losses])?);
    Ok(files)
}

#[derive(Serialize)]
struct SampleReport {
    model: PathBuf,
    kind: String,
    dim: usize,
    n: usize,
    sampler: SamplerConfig,
}

fn cmd_sample(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let s = &cfg.sample;
    let path = s.model.as_deref().expect("validated");
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let saved = read_model(BufReader::new(file)).map_err(|e| CliError::data(path, e.to_string()))?;
    let samples = sample(&saved.model, &saved.schedule, &s.sampler, s.n)?;
    let report = SampleReport {
        model: path.to_path_buf(),
        kind: saved.model.kind().to_string(),
        dim: saved.model.dim(),
        n: s.n,
        sampler: s.sampler.clone(),
    };
    emit_report(out, "sample", &report, vec![Table::new("samples.csv", rows_csv(&samples))])
}

fn cmd_pipeline(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let run = run_pipeline(&cfg.pipeline)?;
    let r = &run.report;
    let errors = csv_table(
        "errors.csv",
        &["sample".into(), "nearest".into(), "distance".into()],
        r.recovery
            .distances
            .iter()
            .zip(&r.recovery.nearest)
            .enumerate()
            .map(|(i, (d, n))| vec![i.to_string(), n.to_string(), format!("{d:?}")]),
    )?;
    emit_report(
        out,
        "pipeline",
        r,
        vec![
            errors,
            Table::new("latents.csv", rows_csv(&run.latents)),
            Table::new("recovered.csv", rows_csv(&run.recovered)),
        ],
    )
}

const SWEEP_HEADER: &str = "m,cost,sampler_steps,recovery_steps,recovery_converged\n";

#[derive(Serialize)]
struct EmptySweep {
    d: usize,
    sparsity: usize,
    m: Vec<usize>,
    cost: Vec<f64>,
    argmin_m: Option<usize>,
}

fn cmd_sweep(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let s = &cfg.sweep_m;
    let grid = s.grid.clone().unwrap_or_else(|| dense_grid(s.d, s.sparsity));
    if grid.is_empty() {
        log::warn!("empty m grid; writing a header-only curve");
        let curve = EmptySweep {
            d: s.d,
            sparsity: s.sparsity,
            m: Vec::new(),
            cost: Vec::new(),
            argmin_m: None,
        };
        let table = Table::new("sweep.csv", SWEEP_HEADER.as_bytes().to_vec());
        return emit_report(out, "sweep", &curve, vec![table]);
    }
    let curve = optimal_m_sweep(s.d, s.sparsity, &grid, &s.model)?;
    let table = table_from("sweep.csv", |b| curve.write_csv(b))?;
    emit_report(out, "sweep", &curve, vec![table])
}

#[derive(Serialize)]
struct PcaReport {
    names: Vec<String>,
    rows: usize,
    imputed: Vec<usize>,
    standardizer: Standardizer,
    model: PcaModel,
    cumulative_explained: f64,
}

fn cmd_pca(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let p = &cfg.pca;
    let path = p.factors.as_deref().expect("validated");
    let panel = load_panel(path)?;
    if p.k > panel.len().min(panel.dim()) {
        return Err(CliError::config("pca.k", format!("must not exceed min(rows, columns) = {}", panel.len().min(panel.dim()))));
    }
    let rows = panel.rows();
    let standardizer = if p.standardize {
        Standardizer::fit(&rows)?
    } else {
        Standardizer::identity(panel.dim())
    };
    let z: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.apply(r)).collect();
    let model = pca_fit(&z, p.k)?;
    let k = model.k();
    let mut header = vec!["component".to_string()];
    header.extend(panel.names.iter().cloned());
    let components = csv_table(
        "components.csv",
        &header,
        (0..k).map(|j| {
            let mut r = vec![format!("pc{}", j + 1)];
            r.extend(model.components.row(j).iter().map(|v| format!("{v:?}")));
            r
        }),
    )?;
    let mut header = vec!["date".to_string()];
    header.extend((1..=k).map(|j| format!("pc{j}")));
    let scores = z
        .iter()
        .zip(&panel.times)
        .map(|(zi, t)| {
            let mut r = vec![t.clone()];
            r.extend(model.encode(zi)?.iter().map(|v| format!("{v:?}")));
            Ok(r)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let scores = csv_table("scores.csv", &header, scores)?;
    let report = PcaReport {
        names: panel.names.clone(),
        rows: panel.len(),
        imputed: panel.imputed.clone(),
        cumulative_explained: model.cumulative_explained(),
        standardizer,
        model,
    };
    emit_report(out, "pca", &report, vec![components, scores])
}

fn cmd_ssa(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let s = &cfg.ssa;
    let factors = load_panel(s.factors.as_deref().expect("validated"))?;
    let returns = load_panel(s.returns.as_deref().expect("validated"))?;
    let indices = s
        .stressed
        .iter()
        .enumerate()
        .map(|(i, name)| {
            factors
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| CliError::config(format!("ssa.stressed[{i}]"), format!("no factor column named `{name}`")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let scenario = Scenario {
        stress: vec![0.0; indices.len()],
        indices,
    };
    let (x, y) = (factors.rows(), returns.rows());
    let predictor = match s.predictor {
        PredictorChoice::LinearRegression => Predictor::fit_linear(InputMap::Identity, &x, &y)?,
        PredictorChoice::TrainedNetwork => Predictor::fit_network(InputMap::Identity, &x, &y, &s.network)?,
    };
    let report = rolling_backtest(&factors, &returns, &scenario, &predictor, &s.backtest)?;
    let table = table_from("ssa-table.csv", |b| report.write_table(b).map_err(|e| std::io::Error::other(e.to_string())))?;
    let mut header = vec!["date".to_string()];
    for k in &report.series {
        header.push(format!("{}_ssa", k.kind.name()));
        header.push(format!("{}_realized", k.kind.name()));
    }
    let series = csv_table(
        "ssa-series.csv",
        &header,
        report.dates.iter().enumerate().map(|(i, d)| {
            let mut r = vec![d.clone()];
            for k in &report.series {
                r.push(format!("{:?}", k.stressed[i]));
                r.push(format!("{:?}", k.realized[i]));
            }
            r
        }),
    )?;
    let mut files = emit_report(out, "ssa", &report, vec![table, series])?;
    if let Some(gen) = &s.generation {
        let fid = ssa_fidelity(&factors, &returns, &scenario, &s.backtest, gen)?;
        let table = table_from("generated-table.csv", |b| {
            fid.generated.write_table(b).map_err(|e| std::io::Error::other(e.to_string()))
        })?;
        files.extend(emit_report(out, "fidelity", &fid, vec![table])?);
    }
    Ok(files)
}

#[derive(Serialize)]
struct BenchReport {
    timing: TimingReport,
    sampler_seconds: Vec<f64>,
    recovery_seconds: Vec<f64>,
}

fn cmd_bench(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let b = &cfg.bench;
    let root = RngStream::new(b.seed);
    let sched = VpSchedule::default();
    let net = NoiseNet::new(b.m, &b.hidden, b.time_features, 1.0, &root.labeled("network"))?;
    let model = ScoreModel::Network(net);
    let sampler = SamplerConfig {
        kind: SamplerKind::Stochastic,
        steps: b.sampler_steps,
        grid: TimeGrid::Exponential,
        seed: root.labeled("sample").seed,
    };
    let grid = time_grid(&sched, sampler.steps, sampler.grid)?;
    let mut sample_watch = Stopwatch::default();
    for i in 0..b.samples {
        sample_watch.time(|| sample_chain(&model, &sched, &sampler, &grid, i))?;
    }
    let data = synth_sparse_dataset(&SparseDatasetSpec {
        d: b.d,
        sparsity: b.sparsity,
        n: b.samples,
        amplitude: AmplitudeLaw::UniformSigned,
        seed: root.labeled("data").seed,
    })?;
    let sketch = gaussian_sketch(b.m, b.d, &root.labeled("sketch"))?;
    let latents = compress_dataset(&data, &sketch)?;
    let lmax: Vec<f64> = latents.iter().map(|y| norm_inf(&sketch.matrix().tr_mul_vec(y))).collect();
    let lambda = b.lambda_fraction * csdm_core::stats::median(&lmax);
    let rec = recover_latents(&sketch, &latents, lambda, &b.fista, false)?;
    let report = BenchReport {
        timing: measure_speedup(sample_watch.median_after_warmup(), rec.stopwatch.median_after_warmup(), b.m, b.d)?,
        sampler_seconds: sample_watch.laps().to_vec(),
        recovery_seconds: rec.stopwatch.laps().to_vec(),
    };
    emit_report(out, "bench", &report, Vec::new())
}

#[derive(Serialize)]
struct ImageStats {
    source: String,
    images: usize,
    source_size: [usize; 2],
    size: [usize; 2],
    near_zero_before: f64,
    near_zero_after: f64,
}

fn cmd_make_data(cfg: &ConfigFile, out: &Path) -> CliResult<Vec<PathBuf>> {
    let m = &cfg.make_data;
    match m.kind {
        DataKind::Sparse => {
            let data = synth_sparse_dataset(&m.sparse)?;
            let mut tables = vec![Table::new("data.csv", rows_csv(&data))];
            if let Some(sm) = m.sketch_m {
                let sketch = gaussian_sketch(sm, m.sparse.d, &RngStream::new(m.sparse.seed).labeled("sketch"))?;
                tables.push(Table::new("latents.csv", rows_csv(&compress_dataset(&data, &sketch)?)));
                tables.push(Table::new("sketch.json", to_json(&sketch.spec())?.into_bytes()));
            }
            emit_report(out, "make-data", &m.sparse, tables)
        }
        DataKind::FactorMarket => {
            let market = synthetic_factor_market(&m.market)?;
            let f = table_from("factors.csv", |b| {
                market.factors.write_csv(b).map_err(|e| std::io::Error::other(e.to_string()))
            })?;
            let r = table_from("returns.csv", |b| {
                market.returns.write_csv(b).map_err(|e| std::io::Error::other(e.to_string()))
            })?;
            emit_report(out, "make-data", &m.market, vec![f, r])
        }
        DataKind::Images => {
            let im = &m.images;
            let (mut ds, source) = match &im.idx {
                Some(p) => (load_idx_images(p)?, p.display().to_string()),
                None => (
                    synthetic_digits(im.synthetic_count, im.synthetic_size, im.seed),
                    "synthetic-digits".to_string(),
                ),
            };
            if let Some(limit) = im.limit {
                ds.images.truncate(limit);
            }
            let up = upscale_nearest(&ds, im.width, im.height).map_err(|msg| CliError::config("make-data.images.width", msg))?;
            let stats = ImageStats {
                source,
                images: up.len(),
                source_size: [ds.width, ds.height],
                size: [up.width, up.height],
                near_zero_before: ds.near_zero_fraction(),
                near_zero_after: up.near_zero_fraction(),
            };
            emit_report(
                out,
                "make-data",
                &stats,
                vec![
                    Table::new("images.csv", rows_csv(&up.images)),
                    Table::new("images.idx", write_idx_images(&up)),
                ],
            )
        }
    }
}
