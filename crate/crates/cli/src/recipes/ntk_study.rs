use serde::Serialize;

use llpr::models::Activation;
use llpr::ntk::{approximation_gap_study, recursion_from_correlation, unit_pair, DualActivation, GapStudy};
use llpr::Result;

use super::{run_width_study, WidthOutcome};
use crate::config::ExperimentConfig;
use crate::output::Outputs;

/// Normalized kernels at one input correlation and depth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecursionRow {
    pub activation: Activation,
    pub depth: usize,
    pub correlation: f64,
    pub nngp: f64,
    pub ntk: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct GapSummary {
    activation: Activation,
    a: f64,
    b: f64,
    rows: usize,
    delta_smaller: usize,
    max_abs_xi: f64,
    max_abs_delta: f64,
}

#[derive(Clone, Debug)]
pub struct NtkStudyOutcome {
    pub recursion: Vec<RecursionRow>,
    pub gaps: Vec<GapStudy>,
    pub width: Option<WidthOutcome>,
}

/// Tabulates the kernel recursion and the two approximation gaps for every
/// configured activation; runs the width sweep when configured.
pub fn run_ntk_study(cfg: &ExperimentConfig, out: &Outputs) -> Result<NtkStudyOutcome> {
    let n = cfg.ntk.as_ref().expect("validated ntk section");
    let pairs = n
        .inner_products
        .iter()
        .map(|&p| unit_pair(p, n.input_dim))
        .collect::<Result<Vec<_>>>()?;
    let mut recursion = Vec::new();
    let mut gaps = Vec::new();
    let mut summaries = Vec::new();
    for &act in &n.activations {
        let dual = DualActivation::with_order(act, n.quadrature_order)?;
        for i in 0..n.recursion_points {
            let xi = -1.0 + 2.0 * i as f64 / (n.recursion_points - 1) as f64;
            for k in recursion_from_correlation(&dual, n.max_depth, xi)? {
                recursion.push(RecursionRow {
                    activation: act,
                    depth: k.depth,
                    correlation: xi,
                    nngp: k.nngp,
                    ntk: k.ntk,
                });
            }
        }
        let study = approximation_gap_study(&dual, n.max_depth, &pairs)?;
        out.with_writer(&format!("gaps_{}.csv", act.name()), |w| study.write_csv(w))?;
        summaries.push(GapSummary {
            activation: act,
            a: study.a,
            b: study.b,
            rows: study.rows.len(),
            delta_smaller: study.rows.iter().filter(|r| r.delta_smaller).count(),
            max_abs_xi: study.rows.iter().map(|r| r.xi.abs()).fold(0.0, f64::max),
            max_abs_delta: study.rows.iter().map(|r| r.delta.abs()).fold(0.0, f64::max),
        });
        gaps.push(study);
    }
    out.csv_rows("recursion.csv", &recursion)?;
    out.csv_rows("gap_summary.csv", &summaries)?;
    let width = match &cfg.width {
        Some(_) => Some(run_width_study(cfg, &out.sub("width")?)?),
        None => None,
    };
    Ok(NtkStudyOutcome { recursion, gaps, width })
}
