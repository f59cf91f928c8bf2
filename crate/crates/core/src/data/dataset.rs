use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::Matrix;

/// Per-column affine transform fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// `false` for constant columns, which are passed through untouched.
    pub feature_scaled: Vec<bool>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Standardization {
    pub fn identity(n_features: usize) -> Self {
        Self {
            feature_mean: vec![0.0; n_features],
            feature_std: vec![1.0; n_features],
            feature_scaled: vec![false; n_features],
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    pub fn constant_columns(&self) -> Vec<usize> {
        self.feature_scaled
            .iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn transform_feature(&self, j: usize, v: f64) -> f64 {
        if self.feature_scaled[j] {
            (v - self.feature_mean[j]) / self.feature_std[j]
        } else {
            v
        }
    }

    pub fn inverse_feature(&self, j: usize, v: f64) -> f64 {
        if self.feature_scaled[j] {
            v * self.feature_std[j] + self.feature_mean[j]
        } else {
            v
        }
    }

    pub fn transform_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn inverse_target(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }

    /// Maps a variance in standardized target units back to original units.
    pub fn inverse_variance(&self, v: f64) -> f64 {
        v * self.target_std * self.target_std
    }
}

/// Features, targets and bookkeeping for one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Present once the dataset has been standardized.
    pub standardization: Option<Standardization>,
    /// Per-sample loss divisors `n_i`; absent means all ones.
    pub weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(features: Matrix, targets: Vec<f64>) -> Result<Self> {
        ensure_len("dataset targets", features.rows(), targets.len())?;
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        let feature_names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            features,
            targets,
            feature_names,
            target_name: "y".into(),
            standardization: None,
            weights: None,
        })
    }

    /// One-feature dataset from paired scalars.
    pub fn from_scalars(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_vec(x.len(), 1, x.to_vec())?, y.to_vec())
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        ensure_len("sample weights", self.len(), weights.len())?;
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("sample weight {i} must be positive, got {w}")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_names(mut self, features: Vec<String>, target: impl Into<String>) -> Result<Self> {
        ensure_len("feature names", self.n_features(), features.len())?;
        self.feature_names = features;
        self.target_name = target.into();
        Ok(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            standardization: self.standardization.clone(),
            weights: self.weights.as_ref().map(|w| idx.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Concatenates `other` below `self`; both must share the feature layout.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        ensure_len("concatenated features", self.n_features(), other.n_features())?;
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let mut targets = self.targets.clone();
        targets.extend_from_slice(&other.targets);
        let weights = match (&self.weights, &other.weights) {
            (None, None) => None,
            _ => Some(
                (0..self.len())
                    .map(|i| self.weight(i))
                    .chain((0..other.len()).map(|i| other.weight(i)))
                    .collect(),
            ),
        };
        Ok(Self {
            features: Matrix::from_vec(self.len() + other.len(), self.n_features(), data)?,
            targets,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            standardization: self.standardization.clone(),
            weights,
        })
    }
}
