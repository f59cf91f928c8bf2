use serde::Serialize;

use llpr::data::Dataset;
use llpr::eval::{SplitTag, UncertaintyReport};
use llpr::llpr::{accumulate_covariance, calibrate, llpr_variances, CalibrationGrid, GridPoint, LastLayerState};
use llpr::models::Regressor;
use llpr::Result;

use super::Prepared;
use crate::output::Outputs;

/// Batch size of the covariance accumulation.
pub const UQ_BATCH: usize = 256;

/// ς² relative to `tr(FᵀF)/N_L` when no calibration grid is given.
pub const RAW_RELATIVE_REGULARIZER: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct UqOutcome {
    pub state: LastLayerState<f64>,
    pub table: Vec<GridPoint>,
    pub validation: UncertaintyReport,
    pub test: UncertaintyReport,
    pub out_of_domain: Option<UncertaintyReport>,
}

#[derive(Serialize)]
struct UqSummary {
    calibrated: bool,
    alpha2: f64,
    regularizer: f64,
    n_train: usize,
    validation_rmse: f64,
    validation_nll: f64,
    test_rmse: f64,
    test_nll: f64,
    test_mean_variance: f64,
    test_binned_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_of_domain_mean_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_of_domain_flagged: Option<bool>,
}

fn report(split: SplitTag, model: &Regressor, state: &LastLayerState<f64>, data: &Dataset, bin: usize) -> Result<UncertaintyReport> {
    let preds = model.predict_many(&data.features)?;
    let vars = llpr_variances(model, state, data)?;
    UncertaintyReport::new(split, &preds, &data.targets, &vars, bin, state.is_calibrated())
}

/// Accumulates `FᵀF` on the training split, calibrates on validation and
/// scores every split. Without a grid the variances stay raw (`α² = 1`)
/// with ς² = `raw_regularizer · tr(FᵀF)/N_L`.
pub fn run_uq(
    model: &Regressor,
    p: &Prepared,
    grid: Option<&CalibrationGrid>,
    raw_regularizer: f64,
    out: Option<&Outputs>,
) -> Result<UqOutcome> {
    let acc = accumulate_covariance(model, &p.train, UQ_BATCH)?;
    let (state, table) = match grid {
        Some(g) => {
            let r = calibrate(&acc, model, &p.val, g)?;
            (r.state, r.table)
        }
        None => {
            let scale = acc.ftf().trace() / acc.n_features() as f64;
            let s2 = raw_regularizer * if scale > 0.0 { scale } else { 1.0 };
            log::warn!("no calibration grid; reporting raw variances with regularizer {s2:e}");
            (acc.regularized(s2)?, Vec::new())
        }
    };
    let bin = grid.map_or(100, |g| g.bin_size);
    let in_split = if p.test_out.is_some() { SplitTag::InDomain } else { SplitTag::Test };
    let validation = report(SplitTag::Validation, model, &state, &p.val, bin)?;
    let test = report(in_split, model, &state, &p.test, bin)?;
    let out_of_domain = p
        .test_out
        .as_ref()
        .map(|d| report(SplitTag::OutOfDomain, model, &state, d, bin))
        .transpose()?;

    if let Some(o) = out {
        state.save(&o.path("llpr_state.json"))?;
        if !table.is_empty() {
            o.csv_rows("calibration_grid.csv", &table)?;
        }
        for r in [Some(&validation), Some(&test), out_of_domain.as_ref()].into_iter().flatten() {
            o.with_writer(&format!("report_{}.csv", r.split.name()), |w| r.write_csv(w))?;
            o.text(&format!("report_{}.json", r.split.name()), &(r.summary_json()? + "\n"))?;
        }
        o.json(
            "uq_summary.json",
            &UqSummary {
                calibrated: state.is_calibrated(),
                alpha2: state.alpha2(),
                regularizer: state.regularizer(),
                n_train: p.train.len(),
                validation_rmse: validation.rmse,
                validation_nll: validation.nll,
                test_rmse: test.rmse,
                test_nll: test.nll,
                test_mean_variance: test.mean_variance,
                test_binned_residual: test.binned_residual,
                out_of_domain_mean_variance: out_of_domain.as_ref().map(|r| r.mean_variance),
                out_of_domain_flagged: out_of_domain.as_ref().map(|r| r.mean_variance > test.mean_variance),
            },
        )?;
    }
    Ok(UqOutcome {
        state,
        table,
        validation,
        test,
        out_of_domain,
    })
}
