//! Last-layer prediction rigidity.
//!
//! The state holds `FᵀF` accumulated over the training set, the regularizer
//! ς² and the scale α². The variance at a query with last-layer features
//! `f` is `α² fᵀ(FᵀF + ς²I)⁻¹f`.
//!
//! Duplicated or near-duplicated training points leave `FᵀF` singular and
//! need `ς² > 0`; calibration reports [`Error::AllGridPointsFailed`] when no
//! grid value makes the system factorizable.

mod calibrate;
mod ensemble;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate, calibrate_features, CalibrationGrid, CalibrationObjective, CalibrationResult, GridPoint, GridSpec};
pub use ensemble::{
    ensemble_moments, propagate_input_uncertainty, sample_last_layer_ensemble, sample_last_layer_weights,
    PropagatedVariance,
};

use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::{cholesky_factor, CholeskyFactor, DenseMatrix};
use crate::models::Regressor;
use crate::persist;
use crate::scalar::Scalar;

pub const LLPR_FORMAT_VERSION: u32 = 1;

/// Streaming `Σ fᵢfᵢᵀ`; only one batch of features is held at a time.
#[derive(Clone, Debug)]
pub struct CovarianceAccumulator<T: Scalar> {
    ftf: DenseMatrix<T>,
    count: usize,
}

impl<T: Scalar> CovarianceAccumulator<T> {
    pub fn new(n_features: usize) -> Self {
        Self {
            ftf: DenseMatrix::zeros(n_features, n_features),
            count: 0,
        }
    }

    pub fn n_features(&self) -> usize {
        self.ftf.rows()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add(&mut self, f: &[T]) -> Result<()> {
        ensure_len("last-layer features", self.n_features(), f.len())?;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("last-layer features"));
        }
        self.ftf.rank1_update(T::one(), f);
        self.count += 1;
        Ok(())
    }

    /// Adds every row of `batch`.
    pub fn add_batch(&mut self, batch: &DenseMatrix<T>) -> Result<()> {
        ensure_len("last-layer feature batch columns", self.n_features(), batch.cols())?;
        self.ftf = self.ftf.add(&batch.gram())?;
        self.count += batch.rows();
        Ok(())
    }

    /// Merges a partial accumulation; callers fix the merge order.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.ftf = self.ftf.add(&other.ftf)?;
        self.count += other.count;
        Ok(())
    }

    pub fn finish(self) -> LastLayerState<T> {
        LastLayerState::from_ftf(self.ftf, self.count)
    }
}

/// Last-layer covariance plus calibration constants. Immutable: every
/// change of ς² or α² produces a new state.
#[derive(Clone, Debug)]
pub struct LastLayerState<T: Scalar> {
    ftf: DenseMatrix<T>,
    n_accumulated: usize,
    regularizer: T,
    alpha2: T,
    factor: Option<CholeskyFactor<T>>,
    calibrated: bool,
}

/// A variance together with whether α² and ς² came from calibration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LlprVariance<T> {
    pub value: T,
    pub calibrated: bool,
}

impl<T: Scalar> LastLayerState<T> {
    /// Uncalibrated state with `ς² = 0`, `α² = 1`. The factor is absent when
    /// `FᵀF` itself is not positive definite.
    pub fn from_ftf(ftf: DenseMatrix<T>, n_accumulated: usize) -> Self {
        let factor = cholesky_factor(&ftf, T::zero()).ok();
        Self {
            ftf,
            n_accumulated,
            regularizer: T::zero(),
            alpha2: T::one(),
            factor,
            calibrated: false,
        }
    }

    /// Accumulates the rows of a feature matrix in batches of `batch_size`.
    pub fn from_features(features: &DenseMatrix<T>, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        let mut acc = CovarianceAccumulator::new(features.cols());
        let idx: Vec<usize> = (0..features.rows()).collect();
        for chunk in idx.chunks(batch_size) {
            acc.add_batch(&features.select_rows(chunk))?;
        }
        Ok(acc.finish())
    }

    pub fn n_features(&self) -> usize {
        self.ftf.rows()
    }

    pub fn ftf(&self) -> &DenseMatrix<T> {
        &self.ftf
    }

    pub fn n_accumulated(&self) -> usize {
        self.n_accumulated
    }

    /// ς².
    pub fn regularizer(&self) -> T {
        self.regularizer
    }

    /// α².
    pub fn alpha2(&self) -> T {
        self.alpha2
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    pub fn factor(&self) -> Option<&CholeskyFactor<T>> {
        self.factor.as_ref()
    }

    pub(crate) fn require_factor(&self) -> Result<&CholeskyFactor<T>> {
        self.factor.as_ref().ok_or(Error::NotPositiveDefinite {
            index: 0,
            pivot: f64::NAN,
            jitter: self.regularizer.to_f64_lossy(),
        })
    }

    /// Same covariance with a new ς²; α² is kept and the calibrated flag cleared.
    pub fn regularized(&self, regularizer: T) -> Result<Self> {
        if !(regularizer >= T::zero()) || !regularizer.is_finite() {
            return Err(Error::invalid(format!("regularizer must be non-negative, got {regularizer}")));
        }
        let factor = cholesky_factor(&self.ftf, regularizer)?;
        Ok(Self {
            ftf: self.ftf.clone(),
            n_accumulated: self.n_accumulated,
            regularizer,
            alpha2: self.alpha2,
            factor: Some(factor),
            calibrated: false,
        })
    }

    /// Fixes both constants and marks the state calibrated.
    pub fn with_calibration(&self, alpha2: T, regularizer: T) -> Result<Self> {
        if !(alpha2 > T::zero()) || !alpha2.is_finite() {
            return Err(Error::invalid(format!("alpha² must be positive, got {alpha2}")));
        }
        let mut s = if regularizer == self.regularizer && self.factor.is_some() {
            self.clone()
        } else {
            self.regularized(regularizer)?
        };
        s.alpha2 = alpha2;
        s.calibrated = true;
        Ok(s)
    }

    /// `fᵀ(FᵀF + ς²I)⁻¹f`, without α².
    pub fn raw_variance(&self, f: &[T]) -> Result<T> {
        ensure_len("query features", self.n_features(), f.len())?;
        self.require_factor()?.inverse_quad_form(f)
    }

    pub fn variance(&self, f: &[T]) -> Result<LlprVariance<T>> {
        Ok(LlprVariance {
            value: self.alpha2 * self.raw_variance(f)?,
            calibrated: self.calibrated,
        })
    }

    /// State after adding `Σ fᵢfᵢᵀ` for the rows of `more`, at the same ς² and α².
    pub fn updated(&self, more: &DenseMatrix<T>) -> Result<Self> {
        ensure_len("added feature columns", self.n_features(), more.cols())?;
        let ftf = self.ftf.add(&more.gram())?;
        let factor = cholesky_factor(&ftf, self.regularizer).ok();
        Ok(Self {
            ftf,
            n_accumulated: self.n_accumulated + more.rows(),
            regularizer: self.regularizer,
            alpha2: self.alpha2,
            factor,
            calibrated: self.calibrated,
        })
    }

    pub fn cast<U: Scalar>(&self) -> LastLayerState<U> {
        let ftf = self.ftf.cast::<U>();
        let regularizer = U::lit(self.regularizer.to_f64_lossy());
        let factor = cholesky_factor(&ftf, regularizer).ok();
        LastLayerState {
            ftf,
            n_accumulated: self.n_accumulated,
            regularizer,
            alpha2: U::lit(self.alpha2.to_f64_lossy()),
            factor,
            calibrated: self.calibrated,
        }
    }
}

/// `α² fᵀ(FᵀF + ς²I)⁻¹f`. Uncalibrated states give the raw value with α² = 1
/// and log a warning; use [`LastLayerState::variance`] for the tagged form.
pub fn llpr_variance<T: Scalar>(state: &LastLayerState<T>, f_star: &[T]) -> Result<T> {
    let v = state.variance(f_star)?;
    if !v.calibrated {
        log::debug!("llpr_variance on an uncalibrated state");
    }
    Ok(v.value)
}

/// Builds `FᵀF` from the model's last-layer features over `train`, holding
/// at most `batch_size` feature rows at once.
pub fn accumulate_covariance(model: &Regressor, train: &Dataset, batch_size: usize) -> Result<LastLayerState<f64>> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set for covariance accumulation"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    ensure_len("model input dimension", model.input_dim(), train.n_features())?;
    let n_l = model.n_last_layer();
    let mut acc = CovarianceAccumulator::new(n_l);
    let mut start = 0;
    while start < train.len() {
        let end = (start + batch_size).min(train.len());
        let mut batch = DenseMatrix::zeros(end - start, n_l);
        for i in start..end {
            let f = model.last_layer_features(train.x(i))?;
            ensure_len("last-layer features", n_l, f.len())?;
            batch.row_mut(i - start).copy_from_slice(&f);
        }
        acc.add_batch(&batch)?;
        start = end;
    }
    Ok(acc.finish())
}

/// Last-layer features of every sample, one row each.
pub fn feature_matrix(model: &Regressor, data: &Dataset) -> Result<DenseMatrix<f64>> {
    let n_l = model.n_last_layer();
    let mut out = DenseMatrix::zeros(data.len(), n_l);
    for i in 0..data.len() {
        let f = model.last_layer_features(data.x(i))?;
        ensure_len("last-layer features", n_l, f.len())?;
        out.row_mut(i).copy_from_slice(&f);
    }
    Ok(out)
}

/// Variances of every sample in `data`.
pub fn llpr_variances(model: &Regressor, state: &LastLayerState<f64>, data: &Dataset) -> Result<Vec<f64>> {
    (0..data.len())
        .map(|i| llpr_variance(state, &model.last_layer_features(data.x(i))?))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    format_version: u32,
    n_features: usize,
    n_accumulated: usize,
    regularizer: f64,
    alpha2: f64,
    calibrated: bool,
    blob: String,
    checksum_sha256: String,
}

impl LastLayerState<f64> {
    /// Writes `path` (JSON header) and a sibling `.bin` blob of `FᵀF`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let blob = persist::blob_path(path);
        let checksum = persist::write_blob(&blob, &self.ftf)?;
        let header = StateHeader {
            format_version: LLPR_FORMAT_VERSION,
            n_features: self.n_features(),
            n_accumulated: self.n_accumulated,
            regularizer: self.regularizer,
            alpha2: self.alpha2,
            calibrated: self.calibrated,
            blob: persist::file_name(&blob),
            checksum_sha256: checksum,
        };
        fs::write(path, serde_json::to_string_pretty(&header)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let h: StateHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
        if h.format_version != LLPR_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported LLPR state version {}", h.format_version)));
        }
        if !(h.regularizer >= 0.0) || !(h.alpha2 > 0.0) {
            return Err(Error::Format("LLPR state holds invalid calibration constants".into()));
        }
        let ftf = persist::read_blob(&path.with_file_name(&h.blob), h.n_features, h.n_features, &h.checksum_sha256)?;
        let factor = cholesky_factor(&ftf, h.regularizer).ok();
        if factor.is_none() && h.regularizer > 0.0 {
            return Err(Error::Format("stored LLPR state does not factorize at its regularizer".into()));
        }
        Ok(Self {
            ftf,
            n_accumulated: h.n_accumulated,
            regularizer: h.regularizer,
            alpha2: h.alpha2,
            factor,
            calibrated: h.calibrated,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::rigidity::linear_pr_closed_form;
    use crate::Matrix;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rank_one() {
        let s = LastLayerState::from_features(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap(), 1).unwrap();
        assert_eq!(s.ftf().as_slice(), &[1.0, 2.0, 2.0, 4.0]);
        assert!(s.factor().is_none());
        assert!(matches!(s.raw_variance(&[1.0, 0.0]), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn batch_size_independent() {
        let f = random_matrix(100, 5, 3);
        let a = LastLayerState::from_features(&f, 1).unwrap();
        let b = LastLayerState::from_features(&f, 100).unwrap();
        let c = LastLayerState::from_features(&f, 7).unwrap();
        assert!(a.ftf().sub(b.ftf()).unwrap().max_abs() < 1e-12);
        assert!(a.ftf().sub(c.ftf()).unwrap().max_abs() < 1e-12);
        assert_eq!(c.n_accumulated(), 100);
    }

    #[test]
    fn prior_only_and_zero_query() {
        let s = LastLayerState::from_ftf(Matrix::zeros(3, 3), 0).with_calibration(1.0, 1.0).unwrap();
        assert!((llpr_variance(&s, &[1.0, 2.0, 2.0]).unwrap() - 9.0).abs() < 1e-14);
        assert_eq!(llpr_variance(&s, &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn woodbury_form() {
        let f = random_matrix(6, 3, 11);
        let (reg, sigma_w2) = (0.5, 1.7);
        let s = LastLayerState::from_features(&f, 2)
            .unwrap()
            .with_calibration(sigma_w2 * reg, reg)
            .unwrap();
        let q = [0.3, -0.7, 1.1];
        let fq = f.matvec(&q).unwrap();
        let mut inner = f.matmul(&f.transpose()).unwrap();
        inner.add_diagonal(reg);
        let inner_q = cholesky_factor(&inner, 0.0).unwrap().inverse_quad_form(&fq).unwrap();
        let qq: f64 = q.iter().map(|v| v * v).sum();
        let raw = s.raw_variance(&q).unwrap();
        assert!((raw - (qq - inner_q) / reg).abs() < 1e-10);
        assert!((llpr_variance(&s, &q).unwrap() - sigma_w2 * (qq - inner_q)).abs() < 1e-10);
    }

    #[test]
    fn linear_matches_closed_form() {
        let x = random_matrix(10, 3, 5);
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let data = Dataset::new(x.clone(), y).unwrap();
        let model = Regressor::linear(vec![0.1, 0.2, 0.3]);
        let s = accumulate_covariance(&model, &data, 4).unwrap();
        assert!(s.ftf().sub(&x.gram()).unwrap().max_abs() < 1e-14);
        let s = s.with_calibration(1.0, 0.3).unwrap();
        let q = [0.5, -1.0, 2.0];
        let want = linear_pr_closed_form(&q, &x, &Matrix::identity(3).scaled(0.3)).unwrap();
        assert!((llpr_variance(&s, &q).unwrap() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn uncalibrated_is_tagged() {
        let s = LastLayerState::from_features(&Matrix::identity(2), 1).unwrap();
        let v = s.variance(&[1.0, 1.0]).unwrap();
        assert!(!v.calibrated);
        assert!((v.value - 2.0).abs() < 1e-15);
        assert!(s.with_calibration(3.0, 0.0).unwrap().variance(&[1.0, 0.0]).unwrap().calibrated);
    }

    #[test]
    fn duplicate_set_halves() {
        let f = random_matrix(8, 3, 21);
        let mut both = f.as_slice().to_vec();
        both.extend_from_slice(f.as_slice());
        let once = LastLayerState::from_features(&f, 3).unwrap();
        let twice = LastLayerState::from_features(&Matrix::from_vec(16, 3, both).unwrap(), 3).unwrap();
        let q = [0.2, 0.4, -0.1];
        let (a, b) = (once.raw_variance(&q).unwrap(), twice.raw_variance(&q).unwrap());
        assert!((b - 0.5 * a).abs() < 1e-12 * a);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("llpr.json");
        let s = LastLayerState::from_features(&random_matrix(5, 2, 1), 2)
            .unwrap()
            .with_calibration(0.7, 1e-3)
            .unwrap();
        s.save(&p).unwrap();
        let t = LastLayerState::load(&p).unwrap();
        assert_eq!(t.ftf(), s.ftf());
        assert_eq!((t.alpha2(), t.regularizer(), t.is_calibrated()), (0.7, 1e-3, true));
        std::fs::write(dir.path().join("llpr.bin"), [0u8; 32]).unwrap();
        assert!(matches!(LastLayerState::load(&p), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn f32_state() {
        let s = LastLayerState::<f32>::from_features(&DenseMatrix::<f32>::identity(2), 1).unwrap();
        assert!((s.raw_variance(&[1.0f32, 1.0]).unwrap() - 2.0).abs() < 1e-6);
    }
}
