use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use llpr_cli::config::{ExperimentConfig, ExperimentKind};

fn llpr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llpr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("llpr runs")
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).expect("json error report");
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn config_init_round_trips_every_kind() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["toy-fit", "benchmark", "ood", "ntk-study", "width-study"] {
        let out = llpr(dir.path(), &["config", "init", "--kind", kind]);
        assert!(out.status.success(), "{kind}");
        let cfg = ExperimentConfig::from_toml(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
        assert_eq!(cfg.kind.name(), kind);
        cfg.validate().unwrap();
    }
    let text = ExperimentConfig::defaults(ExperimentKind::Ood).to_toml();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap().to_toml(), text);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = llpr(dir.path(), &["fit"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(error_kind(&missing), "config");

    fs::write(dir.path().join("bad.toml"), "kind = \"toy-fit\"\nseed = \"zero\"\n").unwrap();
    let bad = llpr(dir.path(), &["--config", "bad.toml", "fit"]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(error_kind(&bad), "config");

    let toy = ExperimentConfig::defaults(ExperimentKind::ToyFit).to_toml();
    fs::write(dir.path().join("toy.toml"), toy).unwrap();
    let wrong = llpr(dir.path(), &["--config", "toy.toml", "benchmark"]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn pipeline_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let toy = ExperimentConfig::defaults(ExperimentKind::ToyFit).to_toml();
    fs::write(dir.path().join("toy.toml"), toy).unwrap();
    let out = llpr(dir.path(), &["--config", "toy.toml", "uq", "--model", "absent.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "pipeline");
}

#[test]
fn toy_fit_then_uq_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let toy = ExperimentConfig::defaults(ExperimentKind::ToyFit).to_toml();
    fs::write(dir.path().join("toy.toml"), &toy).unwrap();
    let fit = llpr(dir.path(), &["--config", "toy.toml", "--out", "run", "--seed", "3", "fit"]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let run = dir.path().join("run");
    for f in ["model.json", "curve.csv", "toy_summary.json", "training_log.jsonl", "overrides.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(run.join("config.toml")).unwrap(), toy);
    let ov: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("overrides.json")).unwrap()).unwrap();
    assert_eq!(ov["seed"], 3);

    let uq = llpr(dir.path(), &["--config", "toy.toml", "--out", "run", "uq"]);
    assert!(uq.status.success(), "{}", String::from_utf8_lossy(&uq.stderr));
    assert!(String::from_utf8_lossy(&uq.stdout).starts_with("raw variances"));
    assert!(run.join("llpr_state.json").exists() && run.join("uq_summary.json").exists());
}
