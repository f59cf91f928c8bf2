use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{SplitTag, UncertaintyReport};
use crate::llpr::{accumulate_covariance, calibrate, llpr_variances, CalibrationGrid};
use crate::models::MlpArchitecture;
use crate::train::{train_mlp, TrainConfig};

/// Batch size for covariance accumulation in sweeps.
const ACCUMULATION_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub width: usize,
    pub seed: u64,
    pub n_params: usize,
    pub alpha2: f64,
    pub regularizer: f64,
    pub val_objective: f64,
    pub test_rmse: f64,
    pub test_nll: f64,
    /// Binned calibration residual on the test split.
    pub test_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthReport {
    pub rows: Vec<WidthRow>,
}

impl WidthReport {
    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.rows.iter().map(|r| r.width).collect();
        w.dedup();
        w
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Test residuals for one seed in width order.
    pub fn residuals_for_seed(&self, seed: u64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.seed == seed).map(|r| r.test_residual).collect()
    }

    /// Mean test residual per width.
    pub fn mean_residuals(&self) -> Vec<(usize, f64)> {
        self.widths()
            .into_iter()
            .map(|w| {
                let v: Vec<f64> = self.rows.iter().filter(|r| r.width == w).map(|r| r.test_residual).collect();
                (w, v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.is_empty() {
        return Err(Error::invalid("width sweep needs at least one width"));
    }
    if let Some(w) = widths.iter().find(|w| **w == 0) {
        return Err(Error::invalid(format!("widths must be at least 1, got {w}")));
    }
    if widths.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::invalid("widths must be strictly ascending"));
    }
    Ok(())
}

/// Trains `template` with every hidden layer set to each width and every
/// seed, then calibrates on `val` and scores on `test`.
pub fn width_sweep(
    template: &MlpArchitecture,
    widths: &[usize],
    seeds: &[u64],
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    grid: &CalibrationGrid,
) -> Result<WidthReport> {
    validate_widths(widths)?;
    if seeds.is_empty() {
        return Err(Error::invalid("width sweep needs at least one seed"));
    }
    if template.hidden.is_empty() {
        return Err(Error::invalid("width sweep needs at least one hidden layer"));
    }
    let mut rows = Vec::new();
    for &width in widths {
        let mut arch = template.clone();
        arch.hidden = vec![width; template.hidden.len()];
        for &seed in seeds {
            let run = TrainConfig { seed, ..cfg.clone() };
            let (model, _) = train_mlp(&arch, train, val, &run)?;
            let state = accumulate_covariance(&model, train, ACCUMULATION_BATCH)?;
            let cal = calibrate(&state, &model, val, grid)?;
            let preds = model.predict_many(&test.features)?;
            let vars = llpr_variances(&model, &cal.state, test)?;
            let report = UncertaintyReport::new(SplitTag::Test, &preds, &test.targets, &vars, grid.bin_size, true)?;
            log::info!("width {width} seed {seed}: test residual {:.4}", report.binned_residual);
            rows.push(WidthRow {
                width,
                seed,
                n_params: arch.n_params(),
                alpha2: cal.state.alpha2(),
                regularizer: cal.state.regularizer(),
                val_objective: cal.objective,
                test_rmse: report.rmse,
                test_nll: report.nll,
                test_residual: report.binned_residual,
            });
        }
    }
    Ok(WidthReport { rows })
}
