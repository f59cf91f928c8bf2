use serde::Serialize;

use llpr::eval::{SplitTag, UncertaintyReport};
use llpr::llpr::{accumulate_covariance, llpr_variances};
use llpr::models::Regressor;
use llpr::train::{train_mlp, TrainingLog};
use llpr::Result;

use super::{load_config_data, prepare, run_uq, UqOutcome, RAW_RELATIVE_REGULARIZER, UQ_BATCH};
use crate::config::ExperimentConfig;
use crate::output::Outputs;

#[derive(Clone, Debug)]
pub struct OodOutcome {
    pub model: Regressor,
    pub log: TrainingLog,
    pub uq: UqOutcome,
    /// In-domain test report with `α² = 1` at the calibrated ς².
    pub baseline: UncertaintyReport,
    pub in_domain_mean_variance: f64,
    pub out_of_domain_mean_variance: f64,
}

impl OodOutcome {
    pub fn flagged(&self) -> bool {
        self.out_of_domain_mean_variance > self.in_domain_mean_variance
    }

    pub fn calibration_beats_baseline(&self) -> bool {
        self.uq.test.binned_residual < self.baseline.binned_residual
    }
}

#[derive(Serialize)]
struct OodSummary {
    n_train: usize,
    n_in_domain_test: usize,
    n_out_of_domain_test: usize,
    in_domain_mean_variance: f64,
    out_of_domain_mean_variance: f64,
    flagged: bool,
    calibrated_residual: f64,
    baseline_residual: f64,
    calibration_beats_baseline: bool,
}

/// Trains on the in-domain part of train/val, calibrates, and compares
/// variances on the two halves of the test split.
pub fn run_ood(cfg: &ExperimentConfig, out: &Outputs) -> Result<OodOutcome> {
    let raw = load_config_data(cfg)?;
    let p = prepare(cfg, &raw, 0)?;
    let (model, log) = train_mlp(&cfg.model, &p.train, &p.val, &cfg.train_for(0))?;
    model.save(&out.path("model.json"))?;
    out.text("training_log.jsonl", &log.to_jsonl())?;
    let uq = run_uq(&model, &p, cfg.grid(), RAW_RELATIVE_REGULARIZER, Some(out))?;

    let raw_state = accumulate_covariance(&model, &p.train, UQ_BATCH)?.regularized(uq.state.regularizer())?;
    let preds = model.predict_many(&p.test.features)?;
    let vars = llpr_variances(&model, &raw_state, &p.test)?;
    let baseline = UncertaintyReport::new(SplitTag::InDomain, &preds, &p.test.targets, &vars, uq.test.bin_size, false)?;
    out.text("report_in-domain_baseline.json", &(baseline.summary_json()? + "\n"))?;

    let ood = uq.out_of_domain.as_ref().expect("ood run has an out-of-domain split");
    let outcome = OodOutcome {
        in_domain_mean_variance: uq.test.mean_variance,
        out_of_domain_mean_variance: ood.mean_variance,
        model,
        log,
        baseline,
        uq,
    };
    let test_out = p.test_out.as_ref().map_or(0, |d| d.len());
    out.json(
        "ood_summary.json",
        &OodSummary {
            n_train: p.train.len(),
            n_in_domain_test: p.test.len(),
            n_out_of_domain_test: test_out,
            in_domain_mean_variance: outcome.in_domain_mean_variance,
            out_of_domain_mean_variance: outcome.out_of_domain_mean_variance,
            flagged: outcome.flagged(),
            calibrated_residual: outcome.uq.test.binned_residual,
            baseline_residual: outcome.baseline.binned_residual,
            calibration_beats_baseline: outcome.calibration_beats_baseline(),
        },
    )?;
    Ok(outcome)
}
