use serde::{Deserialize, Serialize};

use super::LastLayerState;
use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::eval::{binned_calibration, nll};
use crate::linalg::DenseMatrix;
use crate::models::Regressor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationObjective {
    /// Binned log-residual between mean squared error and mean variance.
    #[default]
    BinnedResidual,
    ValidationNll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    Explicit { values: Vec<f64> },
    /// `points` log-spaced multiples of a data-dependent scale: `tr(FᵀF)/N_L`
    /// for ς², `1/median(raw validation variance)` for α².
    Relative { low: f64, high: f64, points: usize },
}

impl GridSpec {
    pub fn log_spaced(low: f64, high: f64, points: usize) -> Self {
        GridSpec::Relative { low, high, points }
    }

    fn validate(&self, what: &str) -> Result<()> {
        match self {
            GridSpec::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::invalid(format!("{what} grid is empty")));
                }
                if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                    return Err(Error::invalid(format!("{what} grid values must be positive, got {v}")));
                }
            }
            GridSpec::Relative { low, high, points } => {
                if *points == 0 {
                    return Err(Error::invalid(format!("{what} grid is empty")));
                }
                if !(*low > 0.0 && low.is_finite() && *high >= *low && high.is_finite()) {
                    return Err(Error::invalid(format!("{what} grid needs 0 < low ≤ high, got [{low}, {high}]")));
                }
                if *points == 1 && low != high {
                    return Err(Error::invalid(format!("{what} grid with one point needs low = high")));
                }
            }
        }
        Ok(())
    }

    /// Ascending, duplicate-free values.
    fn resolve(&self, scale: f64) -> Vec<f64> {
        let mut v: Vec<f64> = match self {
            GridSpec::Explicit { values } => values.clone(),
            GridSpec::Relative { low, high, points } => {
                if *points == 1 {
                    vec![low * scale]
                } else {
                    let (a, b) = (low.ln(), high.ln());
                    (0..*points)
                        .map(|i| (a + (b - a) * i as f64 / (*points - 1) as f64).exp() * scale)
                        .collect()
                }
            }
        };
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        v.dedup();
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationGrid {
    #[serde(default = "default_alpha2_grid")]
    pub alpha2: GridSpec,
    #[serde(default = "default_regularizer_grid")]
    pub regularizer: GridSpec,
    #[serde(default)]
    pub objective: CalibrationObjective,
    #[serde(default = "default_bin_size")]
    pub bin_size: usize,
}

fn default_alpha2_grid() -> GridSpec {
    GridSpec::log_spaced(1e-4, 1e4, 41)
}

fn default_regularizer_grid() -> GridSpec {
    GridSpec::log_spaced(1e-8, 1e2, 11)
}

fn default_bin_size() -> usize {
    100
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self {
            alpha2: default_alpha2_grid(),
            regularizer: default_regularizer_grid(),
            objective: CalibrationObjective::default(),
            bin_size: default_bin_size(),
        }
    }
}

impl CalibrationGrid {
    /// A single absolute `(α², ς²)` point.
    pub fn single(alpha2: f64, regularizer: f64) -> Self {
        Self {
            alpha2: GridSpec::Explicit { values: vec![alpha2] },
            regularizer: GridSpec::Explicit { values: vec![regularizer] },
            ..Self::default()
        }
    }

    pub fn with_objective(mut self, objective: CalibrationObjective) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_bin_size(mut self, bin_size: usize) -> Self {
        self.bin_size = bin_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha2.validate("alpha²")?;
        self.regularizer.validate("regularizer")?;
        if self.bin_size == 0 {
            return Err(Error::invalid("bin_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub regularizer: f64,
    pub alpha2: f64,
    /// `None` when the factorization or objective failed.
    pub objective: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CalibrationResult<T: Scalar> {
    pub state: LastLayerState<T>,
    pub objective: T,
    pub table: Vec<GridPoint>,
}

fn median<T: Scalar>(v: &[T]) -> T {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite variances"));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) * T::lit(0.5)
    }
}

/// Grid search over `(ς², α²)` given validation features and residuals
/// `y − ŷ`. One factorization per ς²; α² only rescales the raw variances.
/// Ties go to the smaller ς², then the smaller α².
pub fn calibrate_features<T: Scalar>(
    state: &LastLayerState<T>,
    val_features: &DenseMatrix<T>,
    residuals: &[T],
    grid: &CalibrationGrid,
) -> Result<CalibrationResult<T>> {
    grid.validate()?;
    ensure_len("validation feature columns", state.n_features(), val_features.cols())?;
    ensure_len("validation residuals", val_features.rows(), residuals.len())?;
    let n = residuals.len();
    if n == 0 {
        return Err(Error::EmptyInput("validation set for calibration"));
    }
    if grid.objective == CalibrationObjective::BinnedResidual && n < grid.bin_size {
        return Err(Error::invalid(format!(
            "binned calibration needs at least bin_size = {} validation samples, got {n}",
            grid.bin_size
        )));
    }
    let trace = state.ftf().trace().to_f64_lossy();
    let reg_scale = if trace > 0.0 { trace / state.n_features() as f64 } else { 1.0 };
    let regs = grid.regularizer.resolve(reg_scale);
    let squared: Vec<T> = residuals.iter().map(|&r| r * r).collect();
    let zeros = vec![T::zero(); n];

    let mut table = Vec::new();
    let mut best: Option<(T, f64, f64)> = None;
    let mut best_state = None;
    for &reg in &regs {
        let regularized = match state.regularized(T::lit(reg)) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("calibration: ς² = {reg:e} skipped ({e})");
                table.push(GridPoint {
                    regularizer: reg,
                    alpha2: f64::NAN,
                    objective: None,
                });
                continue;
            }
        };
        let raw: Vec<T> = (0..n)
            .map(|i| regularized.raw_variance(val_features.row(i)))
            .collect::<Result<_>>()?;
        let med = median(&raw).to_f64_lossy();
        let alpha_scale = if med > 0.0 { 1.0 / med } else { 1.0 };
        for alpha2 in grid.alpha2.resolve(alpha_scale) {
            let a = T::lit(alpha2);
            let vars: Vec<T> = raw.iter().map(|&v| a * v).collect();
            let value = match grid.objective {
                CalibrationObjective::BinnedResidual => {
                    binned_calibration(&vars, &squared, grid.bin_size).map(|b| b.residual)
                }
                CalibrationObjective::ValidationNll => nll(&zeros, &vars, residuals),
            };
            let objective = value.ok().filter(|v| v.is_finite());
            table.push(GridPoint {
                regularizer: reg,
                alpha2,
                objective: objective.map(|v| v.to_f64_lossy()),
            });
            if let Some(v) = objective {
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, reg, alpha2));
                    best_state = Some(regularized.clone());
                }
            }
        }
    }
    let (Some((value, _, alpha2)), Some(s)) = (best, best_state) else {
        return Err(Error::AllGridPointsFailed { tried: regs.len() });
    };
    let chosen = s.with_calibration(T::lit(alpha2), s.regularizer())?;
    log::info!(
        "calibration: ς² = {:e}, α² = {:e}, objective = {:e}",
        chosen.regularizer(),
        alpha2,
        value
    );
    Ok(CalibrationResult {
        state: chosen,
        objective: value,
        table,
    })
}

/// Calibrates on the model's validation residuals.
pub fn calibrate(
    state: &LastLayerState<f64>,
    model: &Regressor,
    val: &Dataset,
    grid: &CalibrationGrid,
) -> Result<CalibrationResult<f64>> {
    if val.is_empty() {
        return Err(Error::EmptyInput("validation set for calibration"));
    }
    let features = super::feature_matrix(model, val)?;
    let preds = model.predict_many(&val.features)?;
    let residuals: Vec<f64> = val.targets.iter().zip(&preds).map(|(y, p)| y - p).collect();
    calibrate_features(state, &features, &residuals, grid)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::Matrix;

    fn setup(n_train: usize, n_val: usize, seed: u64) -> (LastLayerState<f64>, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = |r, c| Matrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let train = g(n_train, 4);
        let val = g(n_val, 4);
        (LastLayerState::from_features(&train, 16).unwrap(), val)
    }

    #[test]
    fn single_point() {
        let (s, val) = setup(30, 10, 1);
        let r = vec![0.1; 10];
        let grid = CalibrationGrid::single(2.5, 0.1).with_objective(CalibrationObjective::ValidationNll);
        let out = calibrate_features(&s, &val, &r, &grid).unwrap();
        assert!(out.state.is_calibrated());
        assert_eq!((out.state.alpha2(), out.state.regularizer()), (2.5, 0.1));
        assert_eq!(out.table.len(), 1);
    }

    #[test]
    fn recovers_unit_scale() {
        // Residuals drawn with exactly the raw variance at the chosen ς².
        let (s, val) = setup(40, 4000, 2);
        let reg = 1.0;
        let fixed = s.regularized(reg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let residuals: Vec<f64> = (0..val.rows())
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * fixed.raw_variance(val.row(i)).unwrap().sqrt()
            })
            .collect();
        let grid = CalibrationGrid {
            alpha2: GridSpec::Explicit {
                values: (0..41).map(|i| 10f64.powf(-2.0 + 0.1 * i as f64)).collect(),
            },
            regularizer: GridSpec::Explicit { values: vec![reg] },
            objective: CalibrationObjective::BinnedResidual,
            bin_size: 100,
        };
        for objective in [CalibrationObjective::BinnedResidual, CalibrationObjective::ValidationNll] {
            let out = calibrate_features(&s, &val, &residuals, &grid.clone().with_objective(objective)).unwrap();
            let step = 0.1;
            assert!(out.state.alpha2().log10().abs() <= step + 1e-12, "{objective:?} {}", out.state.alpha2());
        }
    }

    #[test]
    fn exact_calibration_nll() {
        let (s, val) = setup(40, 5000, 3);
        let fixed = s.regularized(0.5).unwrap();
        let vars: Vec<f64> = (0..val.rows()).map(|i| fixed.raw_variance(val.row(i)).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let residuals: Vec<f64> = vars
            .iter()
            .map(|v| v.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let grid = CalibrationGrid::single(1.0, 0.5).with_objective(CalibrationObjective::ValidationNll);
        let out = calibrate_features(&s, &val, &residuals, &grid).unwrap();
        let mean_log: f64 = vars.iter().map(|v| v.ln()).sum::<f64>() / vars.len() as f64;
        let want = 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln() + mean_log);
        assert!((out.objective - want).abs() < 0.05, "{} vs {want}", out.objective);
    }

    #[test]
    fn ties_prefer_smaller() {
        // Empty covariance: raw = 1/ς², so α²·raw ∈ {2, 4} at ς² = 1 and {1, 2}
        // at ς² = 2. Squared residuals of 2 make (1, 2) and (2, 4) both exact.
        let s = LastLayerState::from_features(&Matrix::zeros(3, 1), 1).unwrap();
        let val = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let grid = CalibrationGrid {
            alpha2: GridSpec::Explicit { values: vec![4.0, 2.0] },
            regularizer: GridSpec::Explicit { values: vec![2.0, 1.0] },
            objective: CalibrationObjective::BinnedResidual,
            bin_size: 2,
        };
        let r = [2f64.sqrt(), 2f64.sqrt()];
        let out = calibrate_features(&s, &val, &r, &grid).unwrap();
        assert_eq!((out.state.regularizer(), out.state.alpha2()), (1.0, 2.0));
    }

    #[test]
    fn all_failed() {
        let neg = LastLayerState::from_ftf(Matrix::identity(2).scaled(-10.0), 0);
        let grid = CalibrationGrid::single(1.0, 1.0).with_bin_size(1);
        let r = calibrate_features(&neg, &Matrix::identity(2), &[0.1, 0.1], &grid);
        assert!(matches!(r, Err(Error::AllGridPointsFailed { tried: 1 })));
    }

    #[test]
    fn too_few_for_a_bin() {
        let (s, val) = setup(10, 5, 5);
        assert!(calibrate_features(&s, &val, &[0.0; 5], &CalibrationGrid::default()).is_err());
    }
}
