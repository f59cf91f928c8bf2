use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{llpr_variance, LastLayerState};
use crate::error::{ensure_len, Error, Result};
use crate::linalg::{dot, sym_eig, DenseMatrix, SYMMETRY_TOLERANCE};
use crate::models::Regressor;
use crate::scalar::Scalar;
use crate::Matrix;

/// `n` draws from `𝓝(mean, α²(FᵀF + ς²I)⁻¹)`, one per row, as
/// `mean + √α² L⁻ᵀz` with `z` standard normal.
pub fn sample_last_layer_weights<T: Scalar>(
    state: &LastLayerState<T>,
    mean: &[T],
    n: usize,
    seed: u64,
) -> Result<DenseMatrix<T>> {
    ensure_len("last-layer mean weights", state.n_features(), mean.len())?;
    let factor = state.require_factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = state.alpha2().sqrt();
    let d = mean.len();
    let mut out = DenseMatrix::zeros(n, d);
    let mut z = vec![T::zero(); d];
    for i in 0..n {
        for zj in z.iter_mut() {
            let v: f64 = StandardNormal.sample(&mut rng);
            *zj = T::lit(v);
        }
        let x = factor.back_substitute(&z)?;
        for (o, (&m, &xj)) in out.row_mut(i).iter_mut().zip(mean.iter().zip(&x)) {
            *o = m + scale * xj;
        }
    }
    Ok(out)
}

/// Copies of `model` whose last-layer weights are sampled around the
/// trained ones. Reproducible for a fixed `seed`.
pub fn sample_last_layer_ensemble(
    state: &LastLayerState<f64>,
    model: &Regressor,
    n_members: usize,
    seed: u64,
) -> Result<Vec<Regressor>> {
    if !state.is_calibrated() {
        return Err(Error::invalid("ensemble sampling needs a calibrated LLPR state"));
    }
    if n_members < 2 {
        return Err(Error::invalid(format!("an ensemble needs at least 2 members, got {n_members}")));
    }
    let w = model.last_layer_weights();
    let draws = sample_last_layer_weights(state, &w, n_members, seed)?;
    (0..n_members).map(|i| model.with_last_layer_weights(draws.row(i))).collect()
}

/// Mean and unbiased variance of the members' predictions at `x`.
pub fn ensemble_moments(members: &[Regressor], x: &[f64]) -> Result<(f64, f64)> {
    if members.len() < 2 {
        return Err(Error::invalid("ensemble moments need at least 2 members"));
    }
    let preds: Vec<f64> = members.iter().map(|m| m.predict(x)).collect::<Result<_>>()?;
    let n = preds.len() as f64;
    let mean = preds.iter().sum::<f64>() / n;
    let var = preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagatedVariance {
    pub model_variance: f64,
    /// `jᵀΣ_x j` with `j = ∂ŷ/∂x`.
    pub input_variance: f64,
    pub total: f64,
    pub calibrated: bool,
}

/// First-order propagation of input noise, added to the LLPR variance
/// (inputs and weights treated as uncorrelated).
pub fn propagate_input_uncertainty(
    model: &Regressor,
    state: &LastLayerState<f64>,
    x_star: &[f64],
    input_covariance: &Matrix,
) -> Result<PropagatedVariance> {
    let d = x_star.len();
    ensure_len("model input dimension", model.input_dim(), d)?;
    ensure_len("input covariance rows", d, input_covariance.rows())?;
    ensure_len("input covariance cols", d, input_covariance.cols())?;
    let scale = input_covariance.max_abs().max(1.0);
    let asym = input_covariance.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if d > 0 && input_covariance.max_abs() > 0.0 {
        let eig = sym_eig(input_covariance)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -1e-12 * scale {
            return Err(Error::invalid(format!(
                "input covariance is not positive semidefinite (eigenvalue {min:e})"
            )));
        }
    }
    let model_variance = llpr_variance(state, &model.last_layer_features(x_star)?)?;
    let j = model.input_gradient(x_star)?;
    let input_variance = dot(&j, &input_covariance.matvec(&j)?);
    Ok(PropagatedVariance {
        model_variance,
        input_variance,
        total: model_variance + input_variance,
        calibrated: state.is_calibrated(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_factor;
    use crate::models::{Activation, MlpArchitecture};

    fn state3() -> LastLayerState<f64> {
        let f = Matrix::from_rows(&[[1.0, 0.2, 0.0], [0.0, 1.0, -0.5], [0.3, 0.1, 1.0], [1.0, 1.0, 1.0]]).unwrap();
        LastLayerState::from_features(&f, 2).unwrap().with_calibration(0.8, 0.1).unwrap()
    }

    #[test]
    fn sample_covariance_matches() {
        let s = state3();
        let mean = [0.5, -1.0, 2.0];
        let n = 10_000;
        let w = sample_last_layer_weights(&s, &mean, n, 7).unwrap();
        let mut cov = Matrix::zeros(3, 3);
        let mut mu = [0.0; 3];
        for i in 0..n {
            for (m, v) in mu.iter_mut().zip(w.row(i)) {
                *m += v / n as f64;
            }
        }
        for i in 0..n {
            let c: Vec<f64> = w.row(i).iter().zip(&mu).map(|(v, m)| v - m).collect();
            cov.rank1_update(1.0 / (n - 1) as f64, &c);
        }
        let mut a = s.ftf().clone();
        a.add_diagonal(0.1);
        let want = cholesky_factor(&a, 0.0).unwrap().inverse().unwrap().scaled(0.8);
        let rel = cov.sub(&want).unwrap().frobenius_norm() / want.frobenius_norm();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
        assert_eq!(w, sample_last_layer_weights(&s, &mean, n, 7).unwrap());
    }

    #[test]
    fn collapses_without_covariance() {
        let f = Matrix::identity(2);
        let s = LastLayerState::from_features(&f, 1).unwrap().with_calibration(1e-20, 1e10).unwrap();
        let model = Regressor::linear(vec![1.0, -2.0]);
        let members = sample_last_layer_ensemble(&s, &model, 5, 1).unwrap();
        for m in &members {
            assert!((m.predict(&[1.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_requires_calibration() {
        let s = LastLayerState::from_features(&Matrix::identity(2), 1).unwrap();
        let model = Regressor::linear(vec![1.0, 0.0]);
        assert!(sample_last_layer_ensemble(&s, &model, 4, 0).is_err());
        let s = s.with_calibration(1.0, 0.0).unwrap();
        assert!(sample_last_layer_ensemble(&s, &model, 1, 0).is_err());
    }

    #[test]
    fn linear_propagation() {
        let s = LastLayerState::from_features(&Matrix::identity(2), 1).unwrap().with_calibration(1.0, 1.0).unwrap();
        let model = Regressor::linear(vec![2.0, -1.0]);
        let x = [0.5, 0.5];
        let zero = propagate_input_uncertainty(&model, &s, &x, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.input_variance, 0.0);
        assert!((zero.total - llpr_variance(&s, &x).unwrap()).abs() < 1e-15);
        let sx = Matrix::from_rows(&[[0.5, 0.1], [0.1, 0.2]]).unwrap();
        let p = propagate_input_uncertainty(&model, &s, &x, &sx).unwrap();
        let want = 4.0 * 0.5 - 2.0 * 2.0 * 0.1 + 0.2;
        assert!((p.input_variance - want).abs() < 1e-14);
        let bad = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!(propagate_input_uncertainty(&model, &s, &x, &bad).is_err());
        assert!(propagate_input_uncertainty(&model, &s, &x, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn mlp_propagation_monte_carlo() {
        use rand::SeedableRng;
        let arch = MlpArchitecture::new(2, vec![8], Activation::Tanh);
        let model = Regressor::mlp_init(arch, 3).unwrap();
        let x = [0.3, -0.2];
        let sx = Matrix::from_rows(&[[1e-4, 2e-5], [2e-5, 5e-5]]).unwrap();
        let s = LastLayerState::from_ftf(Matrix::zeros(model.n_last_layer(), model.n_last_layer()), 0)
            .with_calibration(1.0, 1.0)
            .unwrap();
        let p = propagate_input_uncertainty(&model, &s, &x, &sx).unwrap();
        let l = cholesky_factor(&sx, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut preds = Vec::with_capacity(n);
        for _ in 0..n {
            let z: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
            let dx = l.lower().matvec(&z).unwrap();
            preds.push(model.predict(&[x[0] + dx[0], x[1] + dx[1]]).unwrap());
        }
        let m = preds.iter().sum::<f64>() / n as f64;
        let v = preds.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (n - 1) as f64;
        assert!((v - p.input_variance).abs() < 0.05 * p.input_variance, "{v} vs {}", p.input_variance);
    }
}
