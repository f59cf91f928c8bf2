//! Metrics, calibration curves, confidence bands and the OOD split.

mod bands;
mod metrics;
mod ood;
mod report;

pub use bands::{band_density, band_mass, confidence_bands, Band, BandMeasure, ConfidenceBands, BAND_TOLERANCE};
pub use metrics::{binned_calibration, log_log_slope, nll, rmse, BinnedCalibration, CalibrationBin};
pub use ood::{ood_split, OodSplit};
pub use report::{SampleRow, SplitTag, UncertaintyReport};
