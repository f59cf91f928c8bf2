use serde::Serialize;

use llpr::data::{DefaultTransport, Transport};
use llpr::eval::{SplitTag, UncertaintyReport};
use llpr::llpr::llpr_variances;
use llpr::train::train_mlp;
use llpr::Result;

use super::{load_source, prepare, run_uq, RAW_RELATIVE_REGULARIZER};
use crate::config::{DataSource, ExperimentConfig};
use crate::output::Outputs;

/// Test metrics of one split in original target units.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitMetrics {
    pub dataset: String,
    pub split: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse: f64,
    pub nll: f64,
    pub alpha2: f64,
    pub regularizer: f64,
}

/// One summary row: mean ± standard error over completed splits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub n_splits: usize,
    pub n_completed: usize,
    pub rmse_mean: Option<f64>,
    pub rmse_se: Option<f64>,
    pub nll_mean: Option<f64>,
    pub nll_se: Option<f64>,
    /// `mean±se` with two decimals, `N/A` standard error for one split.
    pub rmse: String,
    pub nll: String,
    /// Empty when every split completed.
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub splits: Vec<SplitMetrics>,
    pub table: Vec<AggregateRow>,
}

fn mean_se(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (Some(m), None);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (Some(m), Some((var / n).sqrt()))
}

fn format_cell(m: Option<f64>, se: Option<f64>) -> String {
    match (m, se) {
        (None, _) => "N/A".into(),
        (Some(m), None) => format!("{m:.2}±N/A"),
        (Some(m), Some(s)) => format!("{m:.2}±{s:.2}"),
    }
}

/// Aggregates the completed splits of one dataset.
pub fn aggregate(dataset: &str, n_splits: usize, splits: &[SplitMetrics], error: String) -> AggregateRow {
    let mine: Vec<&SplitMetrics> = splits.iter().filter(|s| s.dataset == dataset).collect();
    let (rm, rs) = mean_se(&mine.iter().map(|s| s.rmse).collect::<Vec<_>>());
    let (nm, ns) = mean_se(&mine.iter().map(|s| s.nll).collect::<Vec<_>>());
    AggregateRow {
        dataset: dataset.to_string(),
        n_splits,
        n_completed: mine.len(),
        rmse_mean: rm,
        rmse_se: rs,
        nll_mean: nm,
        nll_se: ns,
        rmse: format_cell(rm, rs),
        nll: format_cell(nm, ns),
        error,
    }
}

fn run_split(cfg: &ExperimentConfig, raw: &llpr::Dataset, name: &str, k: usize) -> Result<SplitMetrics> {
    let p = prepare(cfg, raw, k as u64)?;
    let mut arch = cfg.model.clone();
    arch.input_dim = p.train.n_features();
    let (model, _) = train_mlp(&arch, &p.train, &p.val, &cfg.train_for(k as u64))?;
    let uq = run_uq(&model, &p, cfg.grid(), RAW_RELATIVE_REGULARIZER, None)?;
    let preds = model.predict_many(&p.test.features)?;
    let vars = llpr_variances(&model, &uq.state, &p.test)?;
    let r = UncertaintyReport::destandardized(SplitTag::Test, &p.test, &preds, &vars, uq.test.bin_size, uq.state.is_calibrated())?;
    Ok(SplitMetrics {
        dataset: name.to_string(),
        split: k,
        seed: cfg.seed.wrapping_add(k as u64),
        n_train: p.train.len(),
        n_test: p.test.len(),
        rmse: r.rmse,
        nll: r.nll,
        alpha2: uq.state.alpha2(),
        regularizer: uq.state.regularizer(),
    })
}

/// Runs every configured dataset over `n_splits` seeded splits. Failed
/// datasets or splits are recorded in the table rather than aborting.
pub fn run_benchmark(cfg: &ExperimentConfig, out: &Outputs, transport: &dyn Transport) -> Result<BenchmarkOutcome> {
    let b = cfg.benchmark.as_ref().expect("validated benchmark section");
    let mut splits = Vec::new();
    let mut table = Vec::new();
    for name in &b.datasets {
        let source = DataSource::Manifest {
            manifest: b.manifest.clone(),
            name: name.clone(),
        };
        let dir = out.sub(name)?;
        let raw = match load_source(&source, cfg.seed, &cfg.cache_dir, transport) {
            Ok(d) => d,
            Err(e) => {
                log::error!("{name}: {e}");
                table.push(aggregate(name, b.n_splits, &splits, e.to_string()));
                continue;
            }
        };
        let mut errors = Vec::new();
        for k in 0..b.n_splits {
            match run_split(cfg, &raw, name, k) {
                Ok(m) => {
                    log::info!("{name} split {k}: rmse {:.4} nll {:.4}", m.rmse, m.nll);
                    dir.json(&format!("split_{k:02}.json"), &m)?;
                    splits.push(m);
                }
                Err(e) => {
                    log::error!("{name} split {k}: {e}");
                    errors.push(format!("split {k}: {e}"));
                }
            }
        }
        table.push(aggregate(name, b.n_splits, &splits, errors.join("; ")));
    }
    out.csv_rows("splits.csv", &splits)?;
    out.csv_rows("table.csv", &table)?;
    Ok(BenchmarkOutcome { splits, table })
}

/// [`run_benchmark`] with network/file transport.
pub fn run_benchmark_default(cfg: &ExperimentConfig, out: &Outputs) -> Result<BenchmarkOutcome> {
    run_benchmark(cfg, out, &DefaultTransport)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(dataset: &str, rmse: f64) -> SplitMetrics {
        SplitMetrics {
            dataset: dataset.into(),
            split: 0,
            seed: 0,
            n_train: 1,
            n_test: 1,
            rmse,
            nll: 0.0,
            alpha2: 1.0,
            regularizer: 1.0,
        }
    }

    #[test]
    fn one_split_has_no_standard_error() {
        let r = aggregate("a", 1, &[m("a", 0.5)], String::new());
        assert_eq!(r.rmse, "0.50±N/A");
        assert_eq!(r.rmse_se, None);
    }

    #[test]
    fn standard_error_of_two() {
        let r = aggregate("a", 2, &[m("a", 1.0), m("a", 3.0), m("b", 9.0)], String::new());
        assert_eq!(r.rmse_mean, Some(2.0));
        assert!((r.rmse_se.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(r.n_completed, 2);
        assert_eq!(aggregate("c", 20, &[], "offline".into()).rmse, "N/A");
    }
}
