//! The regressor family behind one interface: prediction, parameter
//! gradient, input gradient and last-layer features.

mod activation;
mod gpr;
mod mlp;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use activation::Activation;
pub use gpr::{gpr_sor_fit, KernelSpec};
pub use mlp::{BiasMode, MlpArchitecture, Parametrization};

use crate::error::{ensure_len, Error, Result};
use crate::linalg::dot;
use crate::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained (or initialized) regression model with a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regressor {
    /// `ỹ = wᵀx`, no intercept.
    Linear { weights: Vec<f64> },
    /// `ỹ = Σ_k c_k x^k` on a scalar input, ascending coefficients.
    Polynomial { coefficients: Vec<f64> },
    /// `ỹ = Σ_g A_g exp(−(x−μ_g)²/(2 e^{s_g}))`; parameters stored as
    /// consecutive `(A, μ, s)` triples with `s` the log-variance.
    GaussianSum { params: Vec<f64> },
    /// Subset-of-regressors GPR: `ỹ = k(x, Z)ᵀ w`.
    GprSor {
        kernel: KernelSpec,
        inducing: Matrix,
        weights: Vec<f64>,
    },
    Mlp { arch: MlpArchitecture, params: Vec<f64> },
}

impl Regressor {
    pub fn linear(weights: Vec<f64>) -> Self {
        Regressor::Linear { weights }
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Regressor::Polynomial { coefficients }
    }

    /// Builds a Gaussian-sum model from `(prefactor, mean, variance)` triples.
    pub fn gaussian_sum(components: &[(f64, f64, f64)]) -> Result<Self> {
        let mut params = Vec::with_capacity(3 * components.len());
        for &(a, mu, var) in components {
            if !(var > 0.0) {
                return Err(Error::invalid(format!("gaussian variance must be positive, got {var}")));
            }
            params.extend_from_slice(&[a, mu, var.ln()]);
        }
        Ok(Regressor::GaussianSum { params })
    }

    pub fn mlp(arch: MlpArchitecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        ensure_len("mlp parameters", arch.n_params(), params.len())?;
        Ok(Regressor::Mlp { arch, params })
    }

    pub fn mlp_init(arch: MlpArchitecture, seed: u64) -> Result<Self> {
        let params = arch.init_params(seed)?;
        Ok(Regressor::Mlp { arch, params })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Regressor::Linear { .. } => "linear",
            Regressor::Polynomial { .. } => "polynomial",
            Regressor::GaussianSum { .. } => "gaussian-sum",
            Regressor::GprSor { .. } => "gpr-sor",
            Regressor::Mlp { .. } => "mlp",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Regressor::Linear { weights } => weights.len(),
            Regressor::Polynomial { .. } | Regressor::GaussianSum { .. } => 1,
            Regressor::GprSor { inducing, .. } => inducing.cols(),
            Regressor::Mlp { arch, .. } => arch.input_dim,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Regressor::Linear { weights } => weights,
            Regressor::Polynomial { coefficients } => coefficients,
            Regressor::GaussianSum { params } => params,
            Regressor::GprSor { weights, .. } => weights,
            Regressor::Mlp { params, .. } => params,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    /// Copy of the model with a replaced parameter vector.
    pub fn with_params(&self, new: Vec<f64>) -> Result<Self> {
        ensure_len("parameter vector", self.n_params(), new.len())?;
        if new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        let mut out = self.clone();
        match &mut out {
            Regressor::Linear { weights } => *weights = new,
            Regressor::Polynomial { coefficients } => *coefficients = new,
            Regressor::GaussianSum { params } => *params = new,
            Regressor::GprSor { weights, .. } => *weights = new,
            Regressor::Mlp { params, .. } => *params = new,
        }
        Ok(out)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        ensure_len("model input", self.input_dim(), x.len())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(match self {
            Regressor::Linear { weights } => dot(weights, x),
            Regressor::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, &c| acc * x[0] + c),
            Regressor::GaussianSum { params } => params
                .chunks_exact(3)
                .map(|p| p[0] * gauss_bump(x[0], p[1], p[2]))
                .sum(),
            Regressor::GprSor {
                kernel,
                inducing,
                weights,
            } => dot(&kernel.vector(x, inducing), weights),
            Regressor::Mlp { arch, params } => mlp::forward(arch, params, x)?.output,
        })
    }

    pub fn predict_many(&self, xs: &Matrix) -> Result<Vec<f64>> {
        (0..xs.rows()).map(|i| self.predict(xs.row(i))).collect()
    }

    /// Exact `∂ỹ/∂w` at `x`.
    pub fn param_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match self {
            Regressor::Linear { .. } => x.to_vec(),
            Regressor::Polynomial { coefficients } => monomials(x[0], coefficients.len()),
            Regressor::GaussianSum { params } => {
                let mut g = Vec::with_capacity(params.len());
                for p in params.chunks_exact(3) {
                    let (a, mu, s) = (p[0], p[1], p[2]);
                    let var = s.exp();
                    let e = gauss_bump(x[0], mu, s);
                    let d = x[0] - mu;
                    g.push(e);
                    g.push(a * e * d / var);
                    g.push(a * e * d * d / (2.0 * var));
                }
                g
            }
            Regressor::GprSor { kernel, inducing, .. } => kernel.vector(x, inducing),
            Regressor::Mlp { arch, params } => {
                let t = mlp::forward(arch, params, x)?;
                mlp::backward(arch, params, &t, true).0
            }
        })
    }

    /// Exact `∂ỹ/∂x` at `x`.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match self {
            Regressor::Linear { weights } => weights.clone(),
            Regressor::Polynomial { coefficients } => {
                let d = coefficients
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, &c)| acc * x[0] + k as f64 * c);
                vec![d]
            }
            Regressor::GaussianSum { params } => {
                let d: f64 = params
                    .chunks_exact(3)
                    .map(|p| -p[0] * gauss_bump(x[0], p[1], p[2]) * (x[0] - p[1]) / p[2].exp())
                    .sum();
                vec![d]
            }
            Regressor::GprSor {
                kernel,
                inducing,
                weights,
            } => {
                let mut g = vec![0.0; x.len()];
                for (m, &w) in weights.iter().enumerate() {
                    let dk = kernel.input_gradient(x, inducing.row(m));
                    crate::linalg::axpy(w, &dk, &mut g);
                }
                g
            }
            Regressor::Mlp { arch, params } => {
                let t = mlp::forward(arch, params, x)?;
                mlp::backward(arch, params, &t, false).1
            }
        })
    }

    /// Prediction together with the parameter gradient, sharing one forward pass.
    pub fn predict_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Regressor::Mlp { arch, params } => {
                self.check_input(x)?;
                let t = mlp::forward(arch, params, x)?;
                let out = t.output;
                Ok((out, mlp::backward(arch, params, &t, true).0))
            }
            _ => Ok((self.predict(x)?, self.param_gradient(x)?)),
        }
    }

    /// Latent features `f` on which the final linear readout acts.
    pub fn last_layer_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match self {
            Regressor::Linear { .. } => x.to_vec(),
            Regressor::Polynomial { coefficients } => monomials(x[0], coefficients.len()),
            Regressor::GaussianSum { params } => params
                .chunks_exact(3)
                .map(|p| gauss_bump(x[0], p[1], p[2]))
                .collect(),
            Regressor::GprSor { kernel, inducing, .. } => kernel.vector(x, inducing),
            Regressor::Mlp { arch, params } => mlp::forward(arch, params, x)?.inputs.pop().expect("readout input"),
        })
    }

    /// Positions of the readout weights inside the flat parameter vector.
    pub fn last_layer_indices(&self) -> Vec<usize> {
        match self {
            Regressor::GaussianSum { params } => (0..params.len()).step_by(3).collect(),
            Regressor::Mlp { arch, .. } => {
                let off = arch.layer_offsets();
                let depth = arch.depth();
                (off[depth]..off[depth + 1]).collect()
            }
            _ => (0..self.n_params()).collect(),
        }
    }

    pub fn last_layer_weights(&self) -> Vec<f64> {
        let p = self.params();
        self.last_layer_indices().into_iter().map(|i| p[i]).collect()
    }

    pub fn n_last_layer(&self) -> usize {
        self.last_layer_indices().len()
    }

    /// Copy of the model with replaced readout weights.
    pub fn with_last_layer_weights(&self, w: &[f64]) -> Result<Self> {
        let idx = self.last_layer_indices();
        ensure_len("last-layer weights", idx.len(), w.len())?;
        let mut p = self.params().to_vec();
        for (&i, &v) in idx.iter().zip(w) {
            p[i] = v;
        }
        self.with_params(p)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocumentRef {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let m = doc.model;
        m.with_params(m.params().to_vec())?;
        if let Regressor::Mlp { arch, params } = &m {
            arch.validate()?;
            ensure_len("mlp parameters", arch.n_params(), params.len())?;
        }
        if let Regressor::GprSor { inducing, weights, .. } = &m {
            ensure_len("gpr-sor weights", inducing.rows(), weights.len())?;
        }
        if let Regressor::GaussianSum { params } = &m {
            if params.len() % 3 != 0 {
                return Err(Error::Format("gaussian-sum parameters must come in triples".into()));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize)]
struct ModelDocumentRef<'a> {
    format_version: u32,
    model: &'a Regressor,
}

#[derive(Deserialize)]
struct ModelDocument {
    format_version: u32,
    model: Regressor,
}

#[inline]
fn gauss_bump(x: f64, mu: f64, log_var: f64) -> f64 {
    let d = x - mu;
    (-d * d / (2.0 * log_var.exp())).exp()
}

fn monomials(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut p = 1.0;
    for _ in 0..n {
        out.push(p);
        p *= x;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_predictions() {
        assert_eq!(Regressor::linear(vec![2.0]).predict(&[3.0]).unwrap(), 6.0);
        let g = Regressor::gaussian_sum(&[(1.0, 0.0, 1.0)]).unwrap();
        assert_eq!(g.predict(&[0.0]).unwrap(), 1.0);
        assert!(matches!(
            Regressor::linear(vec![1.0, 2.0]).predict(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn trivial_gradients() {
        assert_eq!(Regressor::linear(vec![5.0, 1.0]).param_gradient(&[2.0, 3.0]).unwrap(), vec![2.0, 3.0]);
        let p = Regressor::polynomial(vec![0.3, -1.0, 2.0]);
        assert_eq!(p.param_gradient(&[2.0]).unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(p.input_gradient(&[2.0]).unwrap(), vec![-1.0 + 8.0]);
    }

    /// Identity activation collapses the network to a product of matrices.
    #[test]
    fn identity_mlp_matches_unrolled_product() {
        for (bias, param) in [
            (BiasMode::None, Parametrization::Standard),
            (BiasMode::Matched, Parametrization::Standard),
            (BiasMode::None, Parametrization::Ntk),
            (BiasMode::Matched, Parametrization::Ntk),
        ] {
            let arch = MlpArchitecture::new(3, vec![4, 5], Activation::Identity)
                .with_bias(bias)
                .with_parametrization(param);
            let m = Regressor::mlp_init(arch.clone(), 11).unwrap();
            let p = m.params();
            let x = [0.3, -1.2, 0.8];
            let b = usize::from(bias == BiasMode::Matched);
            let w0 = Matrix::from_vec(4, 3 + b, p[0..4 * (3 + b)].to_vec()).unwrap();
            let o1 = 4 * (3 + b);
            let w1 = Matrix::from_vec(5, 4 + b, p[o1..o1 + 5 * (4 + b)].to_vec()).unwrap();
            let o2 = o1 + 5 * (4 + b);
            let w2 = Matrix::from_vec(1, 5 + b, p[o2..].to_vec()).unwrap();
            let (s1, s2) = match param {
                Parametrization::Standard => (1.0, 1.0),
                Parametrization::Ntk => (1.0 / 2.0, 1.0 / 5f64.sqrt()),
            };
            let aug = |v: Vec<f64>, s: f64| {
                let mut v: Vec<f64> = v.into_iter().map(|a| a * s).collect();
                if b == 1 {
                    v.push(1.0);
                }
                v
            };
            let h1 = w0.matvec(&aug(x.to_vec(), 1.0)).unwrap();
            let h2 = w1.matvec(&aug(h1, s1)).unwrap();
            let y = w2.matvec(&aug(h2, s2)).unwrap()[0];
            assert!((m.predict(&x).unwrap() - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matched_bias_features() {
        let arch = MlpArchitecture::new(2, vec![8], Activation::Silu);
        let m = Regressor::mlp_init(arch, 3).unwrap();
        let x = [0.4, -0.2];
        let f = m.last_layer_features(&x).unwrap();
        assert_eq!(f.len(), 9);
        assert_eq!(f[8], 1.0);
        assert!((dot(&f, &m.last_layer_weights()) - m.predict(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for act in Activation::ALL {
            let arch = MlpArchitecture::new(2, vec![6, 4], act).with_parametrization(Parametrization::Ntk);
            let m = Regressor::mlp_init(arch, rng.random()).unwrap();
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let g = m.param_gradient(&x).unwrap();
            let h = 1e-5;
            for k in 0..m.n_params() {
                let mut p = m.params().to_vec();
                p[k] += h;
                let up = m.with_params(p.clone()).unwrap().predict(&x).unwrap();
                p[k] -= 2.0 * h;
                let dn = m.with_params(p).unwrap().predict(&x).unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "{act} param {k}");
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let arch = MlpArchitecture::new(1, vec![3], Activation::Tanh);
        let m = Regressor::mlp_init(arch, 9).unwrap();
        let back = Regressor::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let g = Regressor::gaussian_sum(&[(0.5, 0.1, 0.2), (1.5, -0.3, 2.0)]).unwrap();
        assert_eq!(g, Regressor::from_json(&g.to_json().unwrap()).unwrap());
    }

    #[test]
    fn rejects_wrong_version() {
        let s = r#"{"format_version": 99, "model": {"kind": "linear", "weights": [1.0]}}"#;
        assert!(matches!(Regressor::from_json(s), Err(Error::Format(_))));
    }
}
