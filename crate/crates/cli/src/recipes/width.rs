use serde::Serialize;

use llpr::ntk::{width_sweep, WidthReport};
use llpr::Result;

use super::{load_config_data, prepare};
use crate::config::ExperimentConfig;
use crate::output::Outputs;

/// Whether the test calibration residual shrinks with width.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WidthTrend {
    pub widths: Vec<usize>,
    pub mean_residuals: Vec<f64>,
    /// Seeds whose residual is non-increasing across every width step.
    pub monotone_seeds: Vec<u64>,
    pub n_seeds: usize,
    /// More than half of the seeds are monotone.
    pub majority: bool,
}

impl WidthTrend {
    pub fn summary_line(&self) -> String {
        let r: Vec<String> = self
            .widths
            .iter()
            .zip(&self.mean_residuals)
            .map(|(w, r)| format!("{w}:{r:.4}"))
            .collect();
        format!(
            "width trend {}: {}/{} seeds non-increasing; mean residual {}",
            if self.majority { "holds" } else { "fails" },
            self.monotone_seeds.len(),
            self.n_seeds,
            r.join(" ")
        )
    }
}

pub fn width_trend(report: &WidthReport) -> WidthTrend {
    let seeds = report.seeds();
    let monotone_seeds: Vec<u64> = seeds
        .iter()
        .copied()
        .filter(|&s| report.residuals_for_seed(s).windows(2).all(|p| p[1] <= p[0]))
        .collect();
    let mean = report.mean_residuals();
    WidthTrend {
        widths: mean.iter().map(|m| m.0).collect(),
        mean_residuals: mean.iter().map(|m| m.1).collect(),
        majority: 2 * monotone_seeds.len() > seeds.len(),
        monotone_seeds,
        n_seeds: seeds.len(),
    }
}

#[derive(Clone, Debug)]
pub struct WidthOutcome {
    pub report: WidthReport,
    pub trend: WidthTrend,
}

/// Trains the template at every width and seed on one split and records
/// the calibrated test residual.
pub fn run_width_study(cfg: &ExperimentConfig, out: &Outputs) -> Result<WidthOutcome> {
    let w = cfg.width.as_ref().expect("validated width section");
    let raw = load_config_data(cfg)?;
    let p = prepare(cfg, &raw, 0)?;
    let grid = cfg.grid().cloned().unwrap_or_default();
    let seeds: Vec<u64> = w.seeds.iter().map(|s| cfg.seed.wrapping_add(*s)).collect();
    let mut template = cfg.model.clone();
    template.input_dim = p.train.n_features();
    let report = width_sweep(&template, &w.widths, &seeds, &p.train, &p.val, &p.test, &cfg.train, &grid)?;
    let trend = width_trend(&report);
    out.with_writer("width.csv", |b| report.write_csv(b))?;
    out.json("width_summary.json", &trend)?;
    log::info!("{}", trend.summary_line());
    Ok(WidthOutcome { report, trend })
}
