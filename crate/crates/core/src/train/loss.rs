use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::axpy;
use crate::models::Regressor;
use crate::Matrix;

/// Per-sample weighted squared error with an optional quadratic penalty:
/// `𝓛(w) = Σ_i (ỹ_i − y_i)² / n_i + wᵀ Σ w`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossSpec {
    /// Divisors `n_i`; `None` falls back to the dataset's weights (or ones).
    pub weights: Option<Vec<f64>>,
    /// Ignore any weights and use plain squared error.
    pub unweighted: bool,
    /// Symmetric `Σ` of the penalty `wᵀΣw`.
    pub penalty: Option<Matrix>,
}

impl LossSpec {
    pub fn mse() -> Self {
        Self {
            unweighted: true,
            ..Self::default()
        }
    }

    /// Weighted squared error using the dataset's `n_i`.
    pub fn weighted() -> Self {
        Self::default()
    }

    pub fn with_weights(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
            return Err(Error::invalid(format!("loss weight {i} must be positive, got {w}")));
        }
        Ok(Self {
            weights: Some(weights),
            ..Self::default()
        })
    }

    pub fn with_penalty(mut self, sigma: Matrix) -> Self {
        self.penalty = Some(sigma);
        self
    }

    /// Divisor `n_i` for sample `i` of `data`.
    #[inline]
    pub fn divisor(&self, data: &Dataset, i: usize) -> f64 {
        if self.unweighted {
            1.0
        } else if let Some(w) = &self.weights {
            w[i]
        } else {
            data.weight(i)
        }
    }

    /// Analytic `∂²ℓ_i/∂ỹ_i²`.
    #[inline]
    pub fn curvature(&self, data: &Dataset, i: usize) -> f64 {
        2.0 / self.divisor(data, i)
    }

    pub(crate) fn check(&self, data: &Dataset, n_params: usize) -> Result<()> {
        if let Some(w) = &self.weights {
            ensure_len("loss weights", data.len(), w.len())?;
        }
        if let Some(p) = &self.penalty {
            ensure_len("penalty rows", n_params, p.rows())?;
            ensure_len("penalty cols", n_params, p.cols())?;
        }
        Ok(())
    }
}

/// Value and exact parameter gradient of the loss.
pub fn loss_value_and_grad(model: &Regressor, data: &Dataset, loss: &LossSpec) -> Result<(f64, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("loss dataset"));
    }
    ensure_len("dataset features", model.input_dim(), data.n_features())?;
    loss.check(data, model.n_params())?;
    let mut value = 0.0;
    let mut grad = vec![0.0; model.n_params()];
    for i in 0..data.len() {
        let (pred, g) = model.predict_with_gradient(data.x(i))?;
        let n = loss.divisor(data, i);
        let r = pred - data.targets[i];
        value += r * r / n;
        axpy(2.0 * r / n, &g, &mut grad);
    }
    if let Some(sigma) = &loss.penalty {
        let w = model.params();
        let sw = sigma.matvec(w)?;
        let stw = sigma.tr_matvec(w)?;
        value += crate::linalg::dot(w, &sw);
        for k in 0..w.len() {
            grad[k] += sw[k] + stw[k];
        }
    }
    Ok((value, grad))
}

/// Mean of `(ỹ_i − y_i)²/n_i`, the per-epoch quantity logged during training.
pub fn mean_loss(model: &Regressor, data: &Dataset, loss: &LossSpec) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..data.len() {
        let r = model.predict(data.x(i))? - data.targets[i];
        s += r * r / loss.divisor(data, i);
    }
    Ok(s / data.len() as f64)
}
