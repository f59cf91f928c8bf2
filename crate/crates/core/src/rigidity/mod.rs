//! Prediction rigidity over the full parameter vector (or the readout
//! only), using the Gauss–Newton pseudo-Hessian.

mod closed_form;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use closed_form::{gpr_pr_closed_form, linear_pr_closed_form};

use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::{cholesky_with_ladder, DEFAULT_JITTER_LADDER};
use crate::models::Regressor;
use crate::persist;
use crate::train::LossSpec;
use crate::{Matrix, SpdFactor};

/// Largest parameter count for which a dense Hessian is assembled.
pub const MAX_DENSE_PARAMS: usize = 20_000;

/// Curvature `∂²ℓ/∂ỹ²` of a unit-weight squared error. Raw variances are
/// expressed relative to it, so for a squared-error loss
/// `raw_variance = gᵀ(H/2)⁻¹g`, the usual Gaussian-likelihood variance.
pub const REFERENCE_CURVATURE: f64 = 2.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterScope {
    #[default]
    Full,
    /// Only the final linear readout; the gradient is the feature vector.
    LastLayer,
}

impl ParameterScope {
    pub fn size(self, model: &Regressor) -> usize {
        match self {
            ParameterScope::Full => model.n_params(),
            ParameterScope::LastLayer => model.n_last_layer(),
        }
    }

    pub fn gradient(self, model: &Regressor, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            ParameterScope::Full => model.param_gradient(x),
            ParameterScope::LastLayer => model.last_layer_features(x),
        }
    }
}

/// `H ≈ Σ_i g_i c_i g_iᵀ + (Σ + Σᵀ)` and its Cholesky factor.
#[derive(Clone, Debug)]
pub struct PseudoHessian {
    pub matrix: Matrix,
    pub factor: SpdFactor,
    pub curvatures: Vec<f64>,
    pub scope: ParameterScope,
}

impl PseudoHessian {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn jitter_applied(&self) -> f64 {
        self.factor.jitter_applied()
    }
}

/// Assembles the pseudo-Hessian sample by sample over the full parameter
/// vector, trying the default jitter ladder.
pub fn pseudo_hessian(model: &Regressor, train: &Dataset, loss: &LossSpec) -> Result<PseudoHessian> {
    pseudo_hessian_with(model, train, loss, ParameterScope::Full, &DEFAULT_JITTER_LADDER)
}

/// As [`pseudo_hessian`] with an explicit scope and jitter ladder. The
/// penalty in `loss`, if any, must be sized to the scope.
pub fn pseudo_hessian_with(
    model: &Regressor,
    train: &Dataset,
    loss: &LossSpec,
    scope: ParameterScope,
    jitter_ladder: &[f64],
) -> Result<PseudoHessian> {
    let p = scope.size(model);
    if p > MAX_DENSE_PARAMS {
        return Err(Error::TooManyParameters {
            count: p,
            limit: MAX_DENSE_PARAMS,
        });
    }
    ensure_len("dataset features", model.input_dim(), train.n_features())?;
    loss.check(train, p)?;
    let mut h = Matrix::zeros(p, p);
    let mut curvatures = Vec::with_capacity(train.len());
    for i in 0..train.len() {
        let g = scope.gradient(model, train.x(i))?;
        let c = loss.curvature(train, i);
        h.rank1_update(c, &g);
        curvatures.push(c);
    }
    if let Some(sigma) = &loss.penalty {
        h = h.add(sigma)?.add(&sigma.transpose())?;
    }
    if p == 0 {
        return Err(Error::EmptyInput("model parameters"));
    }
    let factor = cholesky_with_ladder(&h, jitter_ladder)?;
    if factor.jitter_applied() > 0.0 {
        log::warn!("pseudo-Hessian needed jitter {:e}", factor.jitter_applied());
    }
    Ok(PseudoHessian {
        matrix: h,
        factor,
        curvatures,
        scope,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityResult {
    pub prediction: f64,
    /// `R_⋆ = (gᵀH⁻¹g)⁻¹` in the curvature units of the loss.
    pub rigidity: f64,
    /// `REFERENCE_CURVATURE / R_⋆`.
    pub raw_variance: f64,
}

/// Rigidity of the prediction at `x_star` with one triangular solve pair.
pub fn prediction_rigidity(model: &Regressor, h: &PseudoHessian, x_star: &[f64]) -> Result<RigidityResult> {
    ensure_len("pseudo-Hessian dimension", h.scope.size(model), h.dim())?;
    let prediction = model.predict(x_star)?;
    let g = h.scope.gradient(model, x_star)?;
    if g.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateGradient { prediction });
    }
    let q = h.factor.inverse_quad_form(&g)?;
    Ok(RigidityResult {
        prediction,
        rigidity: 1.0 / q,
        raw_variance: REFERENCE_CURVATURE * q,
    })
}

const HESSIAN_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HessianHeader {
    format_version: u32,
    dim: usize,
    scope: ParameterScope,
    jitter_applied: f64,
    curvatures: Vec<f64>,
    blob: String,
    checksum_sha256: String,
}

impl PseudoHessian {
    /// Writes `path` (JSON header) and a sibling `.bin` matrix blob.
    pub fn save(&self, path: &Path) -> Result<()> {
        let blob = persist::blob_path(path);
        let checksum = persist::write_blob(&blob, &self.matrix)?;
        let header = HessianHeader {
            format_version: HESSIAN_FORMAT_VERSION,
            dim: self.dim(),
            scope: self.scope,
            jitter_applied: self.jitter_applied(),
            curvatures: self.curvatures.clone(),
            blob: persist::file_name(&blob),
            checksum_sha256: checksum,
        };
        fs::write(path, serde_json::to_string_pretty(&header)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let header: HessianHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
        if header.format_version != HESSIAN_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported pseudo-Hessian version {}", header.format_version)));
        }
        let blob = path.with_file_name(&header.blob);
        let matrix = persist::read_blob(&blob, header.dim, header.dim, &header.checksum_sha256)?;
        let factor = crate::linalg::cholesky_factor(&matrix, header.jitter_applied)?;
        Ok(Self {
            matrix,
            factor,
            curvatures: header.curvatures,
            scope: header.scope,
        })
    }
}
