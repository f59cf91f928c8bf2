use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bands::{confidence_bands, BandMeasure, ConfidenceBands};
use super::metrics::{binned_calibration, nll, rmse, CalibrationBin};
use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    InDomain,
    OutOfDomain,
    Validation,
    Test,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::InDomain => "in-domain",
            SplitTag::OutOfDomain => "out-of-domain",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub prediction: f64,
    pub target: f64,
    pub abs_error: f64,
    pub variance: f64,
}

/// Per-sample uncertainties plus aggregate metrics for one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub split: SplitTag,
    /// `false` when the variances are uncalibrated raw values.
    pub calibrated: bool,
    pub samples: Vec<SampleRow>,
    pub rmse: f64,
    pub nll: f64,
    pub mean_variance: f64,
    pub bin_size: usize,
    pub bins: Vec<CalibrationBin<f64>>,
    pub binned_residual: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    split: SplitTag,
    calibrated: bool,
    n_samples: usize,
    rmse: f64,
    nll: f64,
    mean_variance: f64,
    bin_size: usize,
    binned_residual: f64,
    bins: &'a [CalibrationBin<f64>],
    /// Unit-σ bands; multiply endpoints by σ for any other value.
    bands: &'a ConfidenceBands,
}

impl UncertaintyReport {
    /// Builds the report; bins shrink to the sample count if needed.
    pub fn new(
        split: SplitTag,
        predictions: &[f64],
        targets: &[f64],
        variances: &[f64],
        bin_size: usize,
        calibrated: bool,
    ) -> Result<Self> {
        ensure_len("report targets", predictions.len(), targets.len())?;
        ensure_len("report variances", predictions.len(), variances.len())?;
        if predictions.is_empty() {
            return Err(Error::EmptyInput("uncertainty report"));
        }
        let bin_size = bin_size.clamp(1, predictions.len());
        let sq: Vec<f64> = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).collect();
        let binned = binned_calibration(variances, &sq, bin_size)?;
        let samples = predictions
            .iter()
            .zip(targets)
            .zip(variances)
            .map(|((&p, &t), &v)| SampleRow {
                prediction: p,
                target: t,
                abs_error: (p - t).abs(),
                variance: v,
            })
            .collect();
        Ok(Self {
            split,
            calibrated,
            samples,
            rmse: rmse(predictions, targets)?,
            nll: nll(predictions, variances, targets)?,
            mean_variance: variances.iter().sum::<f64>() / variances.len() as f64,
            bin_size,
            bins: binned.bins,
            binned_residual: binned.residual,
        })
    }

    /// Report in original target units of `data`'s standardization.
    pub fn destandardized(
        split: SplitTag,
        data: &Dataset,
        predictions: &[f64],
        variances: &[f64],
        bin_size: usize,
        calibrated: bool,
    ) -> Result<Self> {
        let (p, t, v): (Vec<f64>, Vec<f64>, Vec<f64>) = match &data.standardization {
            Some(s) => (
                predictions.iter().map(|&y| s.inverse_target(y)).collect(),
                data.targets.iter().map(|&y| s.inverse_target(y)).collect(),
                variances.iter().map(|&v| s.inverse_variance(v)).collect(),
            ),
            None => (predictions.to_vec(), data.targets.clone(), variances.to_vec()),
        };
        Self::new(split, &p, &t, &v, bin_size, calibrated)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "split", "prediction", "target", "abs_error", "variance", "calibrated"])
            .map_err(csv_err)?;
        for (i, r) in self.samples.iter().enumerate() {
            out.write_record([
                i.to_string(),
                self.split.name().to_string(),
                r.prediction.to_string(),
                r.target.to_string(),
                r.abs_error.to_string(),
                r.variance.to_string(),
                self.calibrated.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        let bands = confidence_bands(&[1.0], BandMeasure::LogAxis)?.remove(0);
        let s = Summary {
            split: self.split,
            calibrated: self.calibrated,
            n_samples: self.samples.len(),
            rmse: self.rmse,
            nll: self.nll,
            mean_variance: self.mean_variance,
            bin_size: self.bin_size,
            binned_residual: self.binned_residual,
            bins: &self.bins,
            bands: &bands,
        };
        Ok(serde_json::to_string_pretty(&s)?)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trip_csv() {
        let r = UncertaintyReport::new(SplitTag::Test, &[1.0, 2.0], &[1.5, 2.0], &[0.25, 0.5], 100, true).unwrap();
        assert_eq!(r.bin_size, 2);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("index,split,prediction"));
        assert!(s.contains("0,test,1,1.5,0.5,0.25,true"));
        assert!(r.summary_json().unwrap().contains("\"binned_residual\""));
    }
}
