//! Confidence lines for absolute errors on a log axis.
//!
//! For Gaussian errors with standard deviation σ, the absolute error on a
//! logarithmic axis has density `P(x) ∝ x·exp(−x²/2σ²)` with respect to
//! `ln x`, whose mode is `x = σ`. Each band `[a, b]` has `P(a) = P(b)` and
//! encloses the probability of a `±kσ` Gaussian interval.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which measure the enclosed mass is computed under.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandMeasure {
    /// Mass of the folded Gaussian, `erf(b/√2σ) − erf(a/√2σ)`: `P` taken as
    /// a density in `ln x`, as drawn on a log axis.
    #[default]
    LogAxis,
    /// Mass of `P` as a density in `x` (Rayleigh), `e^{−a²/2σ²} − e^{−b²/2σ²}`.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub k: u32,
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBands {
    pub sigma: f64,
    pub mode: f64,
    pub bands: Vec<Band>,
}

pub const BAND_TOLERANCE: f64 = 1e-10;

/// Unnormalized `x·exp(−x²/2)`.
#[inline]
pub fn band_density(x: f64) -> f64 {
    x * (-0.5 * x * x).exp()
}

/// Mass in `[a, b]` under `measure` at unit σ.
pub fn band_mass(a: f64, b: f64, measure: BandMeasure) -> f64 {
    match measure {
        BandMeasure::LogAxis => libm::erf(b / SQRT_2) - libm::erf(a / SQRT_2),
        BandMeasure::Linear => (-0.5 * a * a).exp() - (-0.5 * b * b).exp(),
    }
}

/// Upper endpoint `b > 1` with `P(b) = P(a)` for a lower endpoint `0 < a < 1`.
fn matching_upper(a: f64) -> Result<f64> {
    let target = band_density(a);
    let (mut lo, mut hi) = (1.0, 2.0);
    while band_density(hi) > target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::RootFindFailure { lo: 1.0, hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if band_density(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Band at unit σ containing mass `erf(k/√2)`.
fn unit_band(k: u32, measure: BandMeasure) -> Result<Band> {
    let target = libm::erf(k as f64 / SQRT_2);
    // Enclosed mass decreases as the lower endpoint moves up towards the mode.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut iterations = 0;
    while hi - lo > BAND_TOLERANCE * 1e-3 {
        let mid = 0.5 * (lo + hi);
        let b = matching_upper(mid)?;
        if band_mass(mid, b, measure) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > 200 {
            return Err(Error::RootFindFailure { lo, hi });
        }
    }
    let a = 0.5 * (lo + hi);
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::RootFindFailure { lo, hi });
    }
    let b = matching_upper(a)?;
    Ok(Band {
        k,
        lower: a,
        upper: b,
        mass: band_mass(a, b, measure),
    })
}

/// Bands for `k = 1, 2, 3` at every σ.
pub fn confidence_bands(sigmas: &[f64], measure: BandMeasure) -> Result<Vec<ConfidenceBands>> {
    if let Some(&s) = sigmas.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {s}")));
    }
    let unit: Vec<Band> = (1..=3).map(|k| unit_band(k, measure)).collect::<Result<_>>()?;
    Ok(sigmas
        .iter()
        .map(|&sigma| ConfidenceBands {
            sigma,
            mode: sigma,
            bands: unit
                .iter()
                .map(|b| Band {
                    k: b.k,
                    lower: b.lower * sigma,
                    upper: b.upper * sigma,
                    mass: b.mass,
                })
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_family() {
        let b = confidence_bands(&[1.0, 2.0], BandMeasure::LogAxis).unwrap();
        for (u, v) in b[0].bands.iter().zip(&b[1].bands) {
            assert_eq!(v.lower, 2.0 * u.lower);
            assert_eq!(v.upper, 2.0 * u.upper);
        }
        assert_eq!(b[1].mode, 2.0);
    }

    #[test]
    fn equal_density_and_mass_both_measures() {
        for measure in [BandMeasure::LogAxis, BandMeasure::Linear] {
            let b = &confidence_bands(&[1.0], measure).unwrap()[0];
            for band in &b.bands {
                assert!((band_density(band.lower) - band_density(band.upper)).abs() < 1e-12);
                let want = libm::erf(band.k as f64 / SQRT_2);
                assert!((band.mass - want).abs() < 1e-9, "{measure:?} {band:?}");
                assert!(band.lower < 1.0 && band.upper > 1.0);
            }
        }
    }

    #[test]
    fn rejects_non_positive_sigma() {
        assert!(confidence_bands(&[0.0], BandMeasure::LogAxis).is_err());
    }
}
