use serde::Serialize;

use llpr::data::Dataset;
use llpr::llpr::{accumulate_covariance, LastLayerState};
use llpr::models::Regressor;
use llpr::rigidity::{prediction_rigidity, pseudo_hessian};
use llpr::train::{fit_gaussian_sum, polyfit, train_mlp, LossSpec, TrainingLog};
use llpr::{Error, Result};

use super::{load_config_data, UQ_BATCH};
use crate::config::ExperimentConfig;
use crate::output::Outputs;

/// One abscissa of the fitted curves; variances are raw (`α² = 1`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub x: f64,
    pub truth: f64,
    pub polynomial_mean: f64,
    pub polynomial_variance: f64,
    pub gaussian_mean: f64,
    pub gaussian_variance: f64,
    pub network_mean: f64,
    pub network_variance: f64,
}

#[derive(Clone, Debug, Serialize)]
struct TrainingPoint {
    x: f64,
    y: f64,
    network_variance: f64,
}

#[derive(Clone, Debug, Serialize)]
struct ToySummary {
    probe: f64,
    probe_variance: f64,
    max_training_variance: f64,
    probe_exceeds_training: bool,
    regularizer: f64,
    best_epoch: usize,
    best_train_loss: f64,
}

#[derive(Clone, Debug)]
pub struct ToyOutcome {
    pub train: Dataset,
    pub network: Regressor,
    pub log: TrainingLog,
    pub state: LastLayerState<f64>,
    pub curve: Vec<CurveRow>,
    pub probe_variance: f64,
    pub training_variances: Vec<f64>,
}

fn rigidity_curve(model: &Regressor, train: &Dataset, xs: &[f64]) -> Result<Vec<(f64, f64)>> {
    let h = pseudo_hessian(model, train, &LossSpec::mse())?;
    xs.iter()
        .map(|&x| match prediction_rigidity(model, &h, &[x]) {
            Ok(r) => Ok((r.prediction, r.raw_variance)),
            Err(Error::DegenerateGradient { prediction }) => Ok((prediction, 0.0)),
            Err(e) => Err(e),
        })
        .collect()
}

/// Fits a polynomial, a Gaussian sum and a network to the cos² points and
/// tabulates the three mean/variance curves.
pub fn run_toy(cfg: &ExperimentConfig, out: &Outputs) -> Result<ToyOutcome> {
    let t = cfg.toy.as_ref().expect("validated toy section");
    let train = load_config_data(cfg)?;
    let n = t.curve_points;
    let xs: Vec<f64> = (0..n)
        .map(|i| t.curve_low + (t.curve_high - t.curve_low) * i as f64 / (n - 1) as f64)
        .collect();

    let poly = polyfit(&train, t.polynomial_degree)?.model;
    let poly_curve = rigidity_curve(&poly, &train, &xs)?;

    let init: Vec<(f64, f64, f64)> = t.gaussian_initial.iter().map(|g| (g[0], g[1], g[2])).collect();
    let (gauss, _) = fit_gaussian_sum(&train, &Regressor::gaussian_sum(&init)?, &LossSpec::mse(), &t.lbfgs)?;
    let gauss_curve = rigidity_curve(&gauss, &train, &xs)?;

    let (network, log) = train_mlp(&cfg.model, &train, &train, &cfg.train_for(0))?;
    let acc = accumulate_covariance(&network, &train, UQ_BATCH)?;
    let scale = acc.ftf().trace() / acc.n_features() as f64;
    let regularizer = t.relative_regularizer * if scale > 0.0 { scale } else { 1.0 };
    let state = acc.regularized(regularizer)?;
    let nn_var = |x: f64| -> Result<f64> { state.raw_variance(&network.last_layer_features(&[x])?) };

    let mut curve = Vec::with_capacity(n);
    for (i, &x) in xs.iter().enumerate() {
        curve.push(CurveRow {
            x,
            truth: x.cos().powi(2),
            polynomial_mean: poly_curve[i].0,
            polynomial_variance: poly_curve[i].1,
            gaussian_mean: gauss_curve[i].0,
            gaussian_variance: gauss_curve[i].1,
            network_mean: network.predict(&[x])?,
            network_variance: nn_var(x)?,
        });
    }
    let training_variances = (0..train.len()).map(|i| nn_var(train.x(i)[0])).collect::<Result<Vec<_>>>()?;
    let probe_variance = nn_var(t.probe)?;
    let max_training_variance = training_variances.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    network.save(&out.path("model.json"))?;
    poly.save(&out.path("polynomial.json"))?;
    gauss.save(&out.path("gaussian_sum.json"))?;
    out.text("training_log.jsonl", &log.to_jsonl())?;
    out.csv_rows("curve.csv", &curve)?;
    let points: Vec<TrainingPoint> = (0..train.len())
        .map(|i| TrainingPoint {
            x: train.x(i)[0],
            y: train.targets[i],
            network_variance: training_variances[i],
        })
        .collect();
    out.csv_rows("training_points.csv", &points)?;
    out.json(
        "toy_summary.json",
        &ToySummary {
            probe: t.probe,
            probe_variance,
            max_training_variance,
            probe_exceeds_training: probe_variance > max_training_variance,
            regularizer,
            best_epoch: log.best_epoch,
            best_train_loss: log.best_val_loss,
        },
    )?;
    Ok(ToyOutcome {
        train,
        network,
        log,
        state,
        curve,
        probe_variance,
        training_variances,
    })
}
