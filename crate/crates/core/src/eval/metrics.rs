use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::scalar::Scalar;

pub fn rmse<T: Scalar>(predictions: &[T], targets: &[T]) -> Result<T> {
    ensure_len("rmse targets", predictions.len(), targets.len())?;
    if predictions.is_empty() {
        return Err(Error::EmptyInput("rmse"));
    }
    let s: T = predictions.iter().zip(targets).map(|(&p, &t)| (t - p) * (t - p)).sum();
    Ok((s / T::from_usize_lossy(predictions.len())).sqrt())
}

/// Mean Gaussian negative log-likelihood.
pub fn nll<T: Scalar>(means: &[T], variances: &[T], targets: &[T]) -> Result<T> {
    ensure_len("nll variances", means.len(), variances.len())?;
    ensure_len("nll targets", means.len(), targets.len())?;
    if means.is_empty() {
        return Err(Error::EmptyInput("nll"));
    }
    let log_2pi = T::lit((2.0 * std::f64::consts::PI).ln());
    let half = T::lit(0.5);
    let mut s = T::zero();
    for (i, ((&m, &v), &y)) in means.iter().zip(variances).zip(targets).enumerate() {
        if !(v > T::zero()) {
            return Err(Error::NonPositiveVariance {
                index: i,
                value: v.to_f64_lossy(),
            });
        }
        s += half * ((y - m) * (y - m) / v + v.ln() + log_2pi);
    }
    Ok(s / T::from_usize_lossy(means.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin<T> {
    pub mean_variance: T,
    pub mse: T,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedCalibration<T> {
    pub bins: Vec<CalibrationBin<T>>,
    /// `Σ_b (n_b / bin_size) · (log10 mse_b − log10 var_b)²`.
    pub residual: T,
}

/// Sorts samples by predicted variance (ties by index) and averages
/// consecutive groups of `bin_size`. The last bin may be short; its
/// residual term is weighted by its relative size.
pub fn binned_calibration<T: Scalar>(
    variances: &[T],
    squared_errors: &[T],
    bin_size: usize,
) -> Result<BinnedCalibration<T>> {
    ensure_len("binned squared errors", variances.len(), squared_errors.len())?;
    if bin_size == 0 {
        return Err(Error::invalid("bin_size must be at least 1"));
    }
    if variances.len() < bin_size || variances.is_empty() {
        return Err(Error::EmptyInput("fewer samples than one calibration bin"));
    }
    if let Some((i, &v)) = variances.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
        return Err(Error::NonPositiveVariance {
            index: i,
            value: v.to_f64_lossy(),
        });
    }
    let mut order: Vec<usize> = (0..variances.len()).collect();
    order.sort_by(|&a, &b| variances[a].partial_cmp(&variances[b]).expect("finite variances").then(a.cmp(&b)));
    let mut bins = Vec::new();
    let mut residual = T::zero();
    let floor = T::min_positive_value();
    for chunk in order.chunks(bin_size) {
        let n = T::from_usize_lossy(chunk.len());
        let mv = chunk.iter().map(|&i| variances[i]).sum::<T>() / n;
        let mse = chunk.iter().map(|&i| squared_errors[i]).sum::<T>() / n;
        let r = mse.max(floor).log10() - mv.log10();
        residual += n / T::from_usize_lossy(bin_size) * r * r;
        bins.push(CalibrationBin {
            mean_variance: mv,
            mse,
            count: chunk.len(),
        });
    }
    Ok(BinnedCalibration { bins, residual })
}

/// Least-squares slope of `log mse` against `log variance` over the bins.
pub fn log_log_slope<T: Scalar>(bins: &[CalibrationBin<T>]) -> Option<T> {
    if bins.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(bins.len());
    let xs: Vec<T> = bins.iter().map(|b| b.mean_variance.ln()).collect();
    let ys: Vec<T> = bins.iter().map(|b| b.mse.max(T::min_positive_value()).ln()).collect();
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    (sxx > T::zero()).then(|| sxy / sxx)
}
