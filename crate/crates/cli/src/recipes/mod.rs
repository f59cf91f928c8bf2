//! The experiment pipelines behind each subcommand.

mod benchmark;
mod ntk_study;
mod ood;
mod toy;
mod uq;
mod width;

use std::path::Path;

use llpr::data::{
    angle_to_unit_circle, find_entry, load_csv_with, load_manifest, split, standardize, synth_bimodal, synth_cos2,
    synth_heteroscedastic, BimodalSpec, Dataset, DefaultTransport, Transport,
};
use llpr::eval::ood_split;
use llpr::models::Regressor;
use llpr::train::{train_mlp, TrainingLog};
use llpr::{Error, Result};

pub use benchmark::{aggregate, run_benchmark, run_benchmark_default, AggregateRow, BenchmarkOutcome, SplitMetrics};
pub use ntk_study::{run_ntk_study, NtkStudyOutcome, RecursionRow};
pub use ood::{run_ood, OodOutcome};
pub use toy::{run_toy, CurveRow, ToyOutcome};
pub use uq::{run_uq, UqOutcome, RAW_RELATIVE_REGULARIZER, UQ_BATCH};
pub use width::{run_width_study, width_trend, WidthOutcome, WidthTrend};

use crate::config::{DataSource, ExperimentConfig, ExperimentKind};
use crate::output::Outputs;

/// Columns of the standardized training split must have this small a mean.
const LEAKAGE_TOLERANCE: f64 = 1e-9;

/// Raw dataset of a config, before any preprocessing.
pub fn load_source(source: &DataSource, seed: u64, cache: &Path, transport: &dyn Transport) -> Result<Dataset> {
    match source {
        DataSource::Cos2 { noise, points } => synth_cos2(*noise, points, seed),
        DataSource::Csv { path, csv } => {
            let l = load_csv_with(path, csv)?;
            if !l.dropped_rows.is_empty() {
                log::info!("{}: dropped {} incomplete rows", path.display(), l.dropped_rows.len());
            }
            Ok(l.dataset)
        }
        DataSource::Manifest { manifest, name } => {
            let entries = load_manifest(manifest)?;
            let l = find_entry(&entries, name)?.load(transport, cache)?;
            if !l.dropped_rows.is_empty() {
                log::info!("{name}: dropped {} incomplete rows", l.dropped_rows.len());
            }
            Ok(l.dataset)
        }
        DataSource::Bimodal {
            n_samples,
            n_features,
            low_fraction,
            low_center,
            high_center,
            mode_std,
            noise,
        } => synth_bimodal(
            &BimodalSpec {
                n_samples: *n_samples,
                n_features: *n_features,
                low_fraction: *low_fraction,
                low_center: *low_center,
                high_center: *high_center,
                mode_std: *mode_std,
                noise: *noise,
            },
            seed,
        ),
        DataSource::Heteroscedastic {
            n_samples,
            n_features,
            noise,
        } => synth_heteroscedastic(*n_samples, *n_features, *noise, seed),
    }
}

/// Train/validation/test data of one run, plus the out-of-domain test
/// subset for OOD experiments.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub test_out: Option<Dataset>,
}

fn check_no_leakage(train: &Dataset) -> Result<()> {
    let Some(s) = &train.standardization else { return Ok(()) };
    for j in 0..train.n_features() {
        if !s.feature_scaled[j] {
            continue;
        }
        let m = (0..train.len()).map(|i| train.x(i)[j]).sum::<f64>() / train.len() as f64;
        if m.abs() > LEAKAGE_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "standardization of column {j} was not fitted on the training split (mean {m:e})"
            )));
        }
    }
    Ok(())
}

/// Column transforms, split `k`, then train-only standardization.
pub fn prepare(cfg: &ExperimentConfig, raw: &Dataset, k: u64) -> Result<Prepared> {
    let mut data = raw.clone();
    let mut shift = 0;
    for a in &cfg.preprocess.angle_columns {
        data = angle_to_unit_circle(&data, a.column + shift, a.degrees)?;
        shift += 1;
    }
    let (tr, va, te) = split(&data, &cfg.split_for(k))?;
    let (mut train, mut val, mut test) = if cfg.preprocess.standardize {
        let (t, mut o) = standardize(&tr, &[&va, &te])?;
        let te = o.pop().expect("two other splits");
        let va = o.pop().expect("two other splits");
        check_no_leakage(&t)?;
        (t, va, te)
    } else {
        (tr, va, te)
    };
    let mut test_out = None;
    if cfg.kind == ExperimentKind::Ood {
        let o = cfg.ood.as_ref().expect("validated ood section");
        train = ood_split(&train, o.feature, o.threshold)?.in_domain;
        val = ood_split(&val, o.feature, o.threshold)?.in_domain;
        let s = ood_split(&test, o.feature, o.threshold)?;
        test = s.in_domain;
        test_out = Some(s.out_of_domain);
        if train.is_empty() || val.is_empty() || test.is_empty() || test_out.as_ref().is_some_and(|d| d.is_empty()) {
            return Err(Error::InvalidArgument("ood threshold leaves an empty partition".into()));
        }
    }
    Ok(Prepared {
        train,
        val,
        test,
        test_out,
    })
}

/// Loads the configured data source with the default transport.
pub fn load_config_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let source = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no data source", cfg.kind.name())))?;
    load_source(source, cfg.seed, &cfg.cache_dir, &DefaultTransport)
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: Regressor,
    pub log: TrainingLog,
    pub toy: Option<ToyOutcome>,
}

/// Trains the configured network on run 0 and writes `model.json` and
/// `training_log.jsonl` (plus the curve files for toy fits).
pub fn run_fit(cfg: &ExperimentConfig, out: &Outputs) -> Result<FitOutcome> {
    if cfg.kind == ExperimentKind::ToyFit {
        let t = run_toy(cfg, out)?;
        return Ok(FitOutcome {
            model: t.network.clone(),
            log: t.log.clone(),
            toy: Some(t),
        });
    }
    if matches!(cfg.kind, ExperimentKind::NtkStudy | ExperimentKind::Benchmark) {
        return Err(Error::InvalidArgument(format!(
            "fit trains a single configured dataset; use the {} subcommand",
            cfg.kind.name()
        )));
    }
    let raw = load_config_data(cfg)?;
    let p = prepare(cfg, &raw, 0)?;
    let (model, log) = train_mlp(&cfg.model, &p.train, &p.val, &cfg.train_for(0))?;
    model.save(&out.path("model.json"))?;
    out.text("training_log.jsonl", &log.to_jsonl())?;
    if let Some(s) = &p.train.standardization {
        out.json("standardization.json", s)?;
    }
    Ok(FitOutcome { model, log, toy: None })
}

/// `uq` on a trained model: the same data preparation as `fit`, then
/// accumulation, calibration and reports.
pub fn run_uq_for_config(cfg: &ExperimentConfig, model: &Regressor, out: &Outputs) -> Result<UqOutcome> {
    let raw = load_config_data(cfg)?;
    match cfg.kind {
        ExperimentKind::ToyFit => {
            let t = cfg.toy.as_ref().expect("validated toy section");
            let p = Prepared {
                train: raw.clone(),
                val: raw.clone(),
                test: raw,
                test_out: None,
            };
            run_uq(model, &p, cfg.grid(), t.relative_regularizer, Some(out))
        }
        ExperimentKind::NtkStudy | ExperimentKind::Benchmark => Err(Error::InvalidArgument(format!(
            "uq needs a single configured dataset; use the {} subcommand",
            cfg.kind.name()
        ))),
        _ => run_uq(model, &prepare(cfg, &raw, 0)?, cfg.grid(), RAW_RELATIVE_REGULARIZER, Some(out)),
    }
}
