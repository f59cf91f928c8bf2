use std::fs;
use std::path::Path;

use llpr::data::{load_manifest, parse_manifest, split, standardize, synth_heteroscedastic, DefaultTransport, SplitSpec, PINS_FILE};
use llpr::eval::{SplitTag, UncertaintyReport};
use llpr::llpr::{accumulate_covariance, calibrate, llpr_variances, CalibrationGrid, LastLayerState};
use llpr::train::{train_mlp, TrainConfig};
use llpr::{Activation, Error, MlpArchitecture};

#[test]
fn shipped_manifest_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../datasets/manifest.jsonl");
    let entries = load_manifest(&path).unwrap();
    let names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["energy", "yacht", "concrete"]);
    for e in &entries {
        assert!(e.url.starts_with("https://"));
        assert!(e.n_rows.is_some() && e.n_features.is_some());
        assert!(!e.license.is_empty());
    }
}

fn local_table(dir: &Path) -> (String, u64) {
    let mut text = String::new();
    for i in 0..40 {
        let x = i as f64 * 0.1;
        text.push_str(&format!("{x:.3}  {:.3}\t{:.4}\n", x * x, (2.0 * x).sin()));
    }
    let path = dir.join("table.txt");
    fs::write(&path, &text).unwrap();
    (format!("file://{}", path.display()), text.len() as u64)
}

#[test]
fn manifest_entry_fetches_pins_and_loads() {
    let src = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    let (url, bytes) = local_table(src.path());
    let line = format!(
        r#"{{"name": "local", "url": "{url}", "sha256": null, "bytes": {bytes}, "license": "test", "csv": {{"target": 2, "delimiter": "whitespace"}}, "n_rows": 40, "n_features": 2}}"#
    );
    let entries = parse_manifest(&format!("# local\n{line}\n")).unwrap();
    let e = &entries[0];
    let first = e.fetch(&DefaultTransport, cache.path()).unwrap();
    assert!(!first.cache_hit);
    assert!(cache.path().join(PINS_FILE).exists());
    let second = e.fetch(&DefaultTransport, cache.path()).unwrap();
    assert!(second.cache_hit);
    assert_eq!(first.sha256, second.sha256);
    let loaded = e.load(&DefaultTransport, cache.path()).unwrap();
    assert_eq!((loaded.dataset.len(), loaded.dataset.n_features()), (40, 2));

    let wrong = line.replace(r#""sha256": null"#, &format!(r#""sha256": "{}""#, "0".repeat(64)));
    let bad = parse_manifest(&wrong).unwrap();
    let fresh = tempfile::tempdir().unwrap();
    assert!(matches!(bad[0].fetch(&DefaultTransport, fresh.path()), Err(Error::ChecksumMismatch { .. })));
}

#[test]
fn train_calibrate_report_round_trip() {
    let raw = synth_heteroscedastic(600, 2, 0.1, 5).unwrap();
    let (tr, va, te) = split(&raw, &SplitSpec::default().with_seed(5)).unwrap();
    let (train, rest) = standardize(&tr, &[&va, &te]).unwrap();
    let (val, test) = (&rest[0], &rest[1]);
    let arch = MlpArchitecture::new(2, vec![16, 16], Activation::Silu);
    let cfg = TrainConfig {
        epochs: 60,
        learning_rate: 1e-2,
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, log) = train_mlp(&arch, &train, val, &cfg).unwrap();
    assert!(log.best_val_loss.is_finite());

    let acc = accumulate_covariance(&model, &train, 100).unwrap();
    let cal = calibrate(&acc, &model, val, &CalibrationGrid::default().with_bin_size(20)).unwrap();
    assert!(cal.state.is_calibrated());
    let vars = llpr_variances(&model, &cal.state, test).unwrap();
    assert!(vars.iter().all(|v| *v > 0.0 && v.is_finite()));
    let preds = model.predict_many(&test.features).unwrap();
    let r = UncertaintyReport::new(SplitTag::Test, &preds, &test.targets, &vars, 20, true).unwrap();
    assert!(r.nll.is_finite() && r.rmse < 1.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    cal.state.save(&path).unwrap();
    let back = LastLayerState::<f64>::load(&path).unwrap();
    assert_eq!(llpr_variances(&model, &back, test).unwrap(), vars);
}
