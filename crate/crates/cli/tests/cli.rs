use std::path::{Path, PathBuf};
use std::process::Command as Process;

use csdm_cli::images::{synthetic_digits, upscale_nearest};
use csdm_cli::report::to_json;
use csdm_cli::{execute, Command, RunConfig};
use csdm_core::pipeline::{run_pipeline, PipelineConfig, PipelineReport};

fn run_with(dir: &Path, command: Command, config: &str, sub: &str) -> Vec<PathBuf> {
    let cfg = dir.join(format!("{sub}.json"));
    std::fs::write(&cfg, config).unwrap();
    execute(&RunConfig {
        command,
        config_path: Some(cfg),
        seed: None,
        out: dir.join(sub),
        quiet: true,
    })
    .unwrap()
}

const SMALL_PIPELINE: &str = r#"{"pipeline": {
    "d": 64, "m": 24, "sparsity": 3, "n_train": 60, "n_generate": 4, "floor_samples": 4,
    "train": {"steps": 60, "hidden": [16], "time_features": 4, "batch_size": 16},
    "sampler": {"steps": 40}
}}"#;

#[test]
fn upscaling_keeps_the_near_zero_fraction() {
    let ds = synthetic_digits(40, 28, 3);
    let before = ds.near_zero_fraction();
    assert!(before > 0.5, "digits should be mostly background, got {before}");
    for size in [56, 32, 45] {
        let up = upscale_nearest(&ds, size, size).unwrap();
        let after = up.near_zero_fraction();
        assert!((after - before).abs() <= 0.02, "{size}: {before} vs {after}");
    }
}

#[test]
fn empty_sweep_writes_a_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let files = run_with(dir.path(), Command::SweepM, r#"{"sweep-m": {"d": 100, "grid": []}}"#, "sweep");
    let csv = files.iter().find(|p| p.ends_with("sweep.csv")).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("m,cost"));
}

#[test]
fn sweep_files_match_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    run_with(dir.path(), Command::SweepM, r#"{"sweep-m": {"d": 400, "sparsity": 1}}"#, "sweep");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep/sweep.json")).unwrap()).unwrap();
    assert_eq!(json["argmin_m"], 20);
    let rows = std::fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + json["m"].as_array().unwrap().len());
}

#[test]
fn pipeline_rerun_is_identical_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    run_with(dir.path(), Command::Pipeline, SMALL_PIPELINE, "a");
    run_with(dir.path(), Command::Pipeline, SMALL_PIPELINE, "b");
    let load = |sub: &str| -> PipelineReport {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(sub).join("pipeline.json")).unwrap()).unwrap()
    };
    let (a, b) = (load("a"), load("b"));
    assert_eq!(to_json(&a.without_timing()).unwrap(), to_json(&b.without_timing()).unwrap());
    for name in ["recovered.csv", "latents.csv", "errors.csv", "effective-config.json"] {
        let fa = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let fb = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(fa, fb, "{name}");
    }
}

#[test]
fn report_json_reparses_to_the_same_value() {
    let cfg: PipelineConfig = serde_json::from_value(
        serde_json::from_str::<serde_json::Value>(SMALL_PIPELINE).unwrap()["pipeline"].clone(),
    )
    .unwrap();
    let run = run_pipeline(&cfg).unwrap();
    let text = to_json(&run.report).unwrap();
    let back: PipelineReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, run.report);
}

#[test]
fn seed_flag_changes_the_sketch() {
    let dir = tempfile::tempdir().unwrap();
    let go = |seed, sub: &str| {
        execute(&RunConfig {
            command: Command::Sketch,
            config_path: None,
            seed: Some(seed),
            out: dir.path().join(sub),
            quiet: true,
        })
        .unwrap();
        std::fs::read_to_string(dir.path().join(sub).join("sketch.json")).unwrap()
    };
    assert_eq!(go(5, "a"), go(5, "b"));
    assert_ne!(go(5, "a"), go(6, "c"));
}

fn csdm(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Process::new(env!("CARGO_BIN_EXE_csdm"))
        .args(args)
        .current_dir(dir)
        .env_remove("CSDM_THREADS")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(csdm(&["sketch", "--out", "ok", "--quiet"], d).0, 0);
    assert!(d.join("ok/effective-config.json").exists());

    std::fs::write(d.join("bad.json"), r#"{"pipeline": {"m": 5000}}"#).unwrap();
    let (code, err) = csdm(&["pipeline", "--config", "bad.json", "--out", "x"], d);
    assert_eq!(code, 2);
    assert!(err.contains("pipeline.m"), "{err}");

    assert_eq!(csdm(&["sketch", "--config", "missing.json", "--out", "x"], d).0, 4);

    std::fs::write(d.join("flat.csv"), "date,a,b\n2001-01,1,2\n2001-02,1,2\n2001-03,1,2\n").unwrap();
    std::fs::write(d.join("pca.json"), r#"{"pca": {"factors": "flat.csv", "k": 1, "standardize": false}}"#).unwrap();
    assert_eq!(csdm(&["pca", "--config", "pca.json", "--out", "x"], d).0, 3);

    let out = Process::new(env!("CARGO_BIN_EXE_csdm"))
        .args(["sketch", "--out", "t", "--quiet"])
        .current_dir(d)
        .env("CSDM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
