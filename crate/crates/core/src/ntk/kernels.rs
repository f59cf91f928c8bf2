use serde::{Deserialize, Serialize};

use super::dual::{DualActivation, DOMAIN_TOLERANCE};
use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::{dot, norm2};
use crate::models::{Activation, MlpArchitecture, Regressor};
use crate::rigidity::ParameterScope;
use crate::Matrix;

/// Infinite-width kernels after `depth` hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelLayer {
    pub depth: usize,
    pub nngp: f64,
    pub ntk: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelPair {
    pub nngp: Matrix,
    pub ntk: Matrix,
    pub depth: usize,
}

/// Recursion on the correlation `ξ` of unit-normalized inputs, layers `0..=depth`.
pub fn recursion_from_correlation(dual: &DualActivation, depth: usize, xi: f64) -> Result<Vec<KernelLayer>> {
    let mut out = Vec::with_capacity(depth + 1);
    let (mut nngp, mut ntk) = (xi, xi);
    out.push(KernelLayer { depth: 0, nngp, ntk });
    for l in 1..=depth {
        if !nngp.is_finite() || nngp.abs() > 1.0 + DOMAIN_TOLERANCE {
            return Err(Error::DomainExceeded { layer: l, value: nngp });
        }
        let next = dual.value(nngp).map_err(|e| relabel(e, l))?;
        let slope = dual.derivative(nngp).map_err(|e| relabel(e, l))?;
        ntk = next + ntk * slope;
        nngp = next;
        out.push(KernelLayer { depth: l, nngp, ntk });
    }
    Ok(out)
}

fn relabel(e: Error, layer: usize) -> Error {
    match e {
        Error::DomainExceeded { value, .. } => Error::DomainExceeded { layer, value },
        other => other,
    }
}

/// `K_NNGP^(l)` and `K_NTK^(l)` for `l = 0..=depth`. Inputs are normalized
/// to unit length first; for the identity activation the product of the
/// norms is restored, which makes the linear case exact.
pub fn kernel_recursion_with(dual: &DualActivation, depth: usize, x_i: &[f64], x_j: &[f64]) -> Result<Vec<KernelLayer>> {
    ensure_len("kernel inputs", x_i.len(), x_j.len())?;
    let (ni, nj) = (norm2(x_i), norm2(x_j));
    if !(ni > 0.0 && nj > 0.0) {
        return Err(Error::invalid("kernel recursion needs nonzero inputs"));
    }
    let xi = dot(x_i, x_j) / (ni * nj);
    let mut layers = recursion_from_correlation(dual, depth, xi)?;
    if dual.activation() == Activation::Identity {
        for k in &mut layers {
            k.nngp *= ni * nj;
            k.ntk *= ni * nj;
        }
    }
    Ok(layers)
}

/// Recursion for the activation and depth of `arch`.
pub fn kernel_recursion(x_i: &[f64], x_j: &[f64], arch: &MlpArchitecture) -> Result<Vec<KernelLayer>> {
    ensure_len("kernel input dimension", arch.input_dim, x_i.len())?;
    let dual = DualActivation::new(arch.activation)?;
    kernel_recursion_with(&dual, arch.depth(), x_i, x_j)
}

/// Final-depth kernels between every pair of rows.
pub fn kernel_pair(dual: &DualActivation, depth: usize, xs: &Matrix) -> Result<KernelPair> {
    let n = xs.rows();
    let mut nngp = Matrix::zeros(n, n);
    let mut ntk = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = *kernel_recursion_with(dual, depth, xs.row(i), xs.row(j))?.last().expect("depth 0 present");
            nngp[(i, j)] = k.nngp;
            nngp[(j, i)] = k.nngp;
            ntk[(i, j)] = k.ntk;
            ntk[(j, i)] = k.ntk;
        }
    }
    Ok(KernelPair { nngp, ntk, depth })
}

fn require_mlp(model: &Regressor, operation: &'static str) -> Result<()> {
    if model.kind() != "mlp" {
        return Err(Error::UnsupportedModel {
            kind: model.kind(),
            operation,
        });
    }
    Ok(())
}

/// `(∂ỹᵢ/∂w)ᵀ(∂ỹⱼ/∂w)` over the parameters in `scope`; the last-layer
/// scope gives `fᵢᵀfⱼ`.
pub fn empirical_ntk(model: &Regressor, x_i: &[f64], x_j: &[f64], scope: ParameterScope) -> Result<f64> {
    require_mlp(model, "empirical_ntk")?;
    let gi = scope.gradient(model, x_i)?;
    let gj = scope.gradient(model, x_j)?;
    Ok(dot(&gi, &gj))
}

pub fn empirical_ntk_matrix(model: &Regressor, data: &Dataset, scope: ParameterScope) -> Result<Matrix> {
    require_mlp(model, "empirical_ntk")?;
    let grads: Vec<Vec<f64>> = (0..data.len()).map(|i| scope.gradient(model, data.x(i))).collect::<Result<_>>()?;
    let n = grads.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(&grads[i], &grads[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BiasMode, Parametrization};

    #[test]
    fn identity_recursion_exact() {
        let d = DualActivation::new(Activation::Identity).unwrap();
        let (a, b) = ([1.0, 2.0, -0.5], [0.3, -1.0, 2.0]);
        for k in kernel_recursion_with(&d, 4, &a, &b).unwrap() {
            let ip = dot(&a, &b);
            assert!((k.nngp - ip).abs() < 1e-14);
            assert!((k.ntk - (k.depth as f64 + 1.0) * ip).abs() < 1e-13);
            assert!((k.ntk - (k.depth as f64 + 1.0) * k.nngp).abs() < 1e-13);
        }
    }

    #[test]
    fn diagonal_stays_one() {
        for act in [Activation::Tanh, Activation::Relu, Activation::Silu, Activation::Erf] {
            let d = DualActivation::new(act).unwrap();
            let x = [0.6, 0.8];
            for k in kernel_recursion_with(&d, 3, &x, &x).unwrap() {
                assert!((k.nngp - 1.0).abs() < 1e-8, "{act}");
            }
        }
    }

    #[test]
    fn ntk_dominates_nngp() {
        let d = DualActivation::new(Activation::Tanh).unwrap();
        let xs = Matrix::from_rows(&[[1.0, 0.0], [0.6, 0.8], [-0.2, 1.0], [0.3, -0.4]]).unwrap();
        let k = kernel_pair(&d, 3, &xs).unwrap();
        let diff = k.ntk.sub(&k.nngp).unwrap();
        let eig = crate::linalg::sym_eig(&diff).unwrap();
        assert!(*eig.values.last().unwrap() > -1e-10);
    }

    #[test]
    fn identity_chain_ntk_equals_scaled_features() {
        // Width-one chain with equal-magnitude weights: every layer contributes fᵢᵀfⱼ.
        let depth = 3;
        let arch = MlpArchitecture::new(1, vec![1; depth], Activation::Identity)
            .with_bias(BiasMode::None)
            .with_parametrization(Parametrization::Ntk);
        let model = Regressor::mlp(arch, vec![0.7, -0.7, 0.7, -0.7]).unwrap();
        let (a, b) = ([1.3], [-0.4]);
        let full = empirical_ntk(&model, &a, &b, ParameterScope::Full).unwrap();
        let last = empirical_ntk(&model, &a, &b, ParameterScope::LastLayer).unwrap();
        assert!((full - (depth as f64 + 1.0) * last).abs() < 1e-12);
    }

    #[test]
    fn ntk_matches_finite_differences() {
        let arch = MlpArchitecture::new(2, vec![5, 4], Activation::Tanh);
        let model = Regressor::mlp_init(arch, 4).unwrap();
        let (a, b) = ([0.3, -0.8], [1.0, 0.2]);
        let p = model.params().to_vec();
        let h = 1e-6;
        let fd = |x: &[f64]| -> Vec<f64> {
            (0..p.len())
                .map(|k| {
                    let mut up = p.clone();
                    let mut dn = p.clone();
                    up[k] += h;
                    dn[k] -= h;
                    let yu = model.with_params(up).unwrap().predict(x).unwrap();
                    let yd = model.with_params(dn).unwrap().predict(x).unwrap();
                    (yu - yd) / (2.0 * h)
                })
                .collect()
        };
        let want = dot(&fd(&a), &fd(&b));
        let got = empirical_ntk(&model, &a, &b, ParameterScope::Full).unwrap();
        assert!((got - want).abs() < 1e-6 * want.abs().max(1.0), "{got} vs {want}");
        assert!(empirical_ntk(&model, &a, &a, ParameterScope::Full).unwrap() >= 0.0);
        assert!(empirical_ntk(&Regressor::linear(vec![1.0, 2.0]), &a, &b, ParameterScope::Full).is_err());
    }
}
