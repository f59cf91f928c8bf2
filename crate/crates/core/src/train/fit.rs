use super::lbfgs::{lbfgs_minimize, LbfgsOptions, LbfgsResult};
use super::loss::{loss_value_and_grad, LossSpec};
use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::lstsq;
use crate::models::Regressor;
use crate::Matrix;

#[derive(Clone, Debug)]
pub struct PolyFit {
    pub model: Regressor,
    /// Fewer distinct points than coefficients; the minimum-norm
    /// coefficients were returned.
    pub rank_deficient: bool,
}

/// Least-squares monomial fit of a single-feature dataset.
pub fn polyfit(train: &Dataset, degree: usize) -> Result<PolyFit> {
    if train.is_empty() {
        return Err(Error::EmptyInput("polyfit training set"));
    }
    ensure_len("polyfit features", 1, train.n_features())?;
    let n = degree + 1;
    let vander = Matrix::from_fn(train.len(), n, |i, k| train.x(i)[0].powi(k as i32));
    let ls = lstsq(&vander, &train.targets)?;
    if ls.rank_deficient {
        log::warn!("polyfit: degree {degree} is underdetermined by {} samples; minimum-norm solution", train.len());
    }
    Ok(PolyFit {
        model: Regressor::polynomial(ls.solution),
        rank_deficient: ls.rank_deficient,
    })
}

/// Fits a Gaussian-sum model by L-BFGS on the squared-error loss,
/// starting from `initial`.
pub fn fit_gaussian_sum(
    train: &Dataset,
    initial: &Regressor,
    loss: &LossSpec,
    opts: &LbfgsOptions,
) -> Result<(Regressor, LbfgsResult)> {
    if !matches!(initial, Regressor::GaussianSum { .. }) {
        return Err(Error::UnsupportedModel {
            kind: initial.kind(),
            operation: "gaussian-sum fitting",
        });
    }
    fit_lbfgs(train, initial, loss, opts)
}

/// Full-batch L-BFGS fit of any model on the given loss.
pub fn fit_lbfgs(
    train: &Dataset,
    initial: &Regressor,
    loss: &LossSpec,
    opts: &LbfgsOptions,
) -> Result<(Regressor, LbfgsResult)> {
    let objective = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        match initial.with_params(w.to_vec()) {
            Ok(m) => loss_value_and_grad(&m, train, loss),
            Err(Error::NonFinite(_)) => Ok((f64::INFINITY, vec![0.0; w.len()])),
            Err(e) => Err(e),
        }
    };
    let res = lbfgs_minimize(objective, initial.params(), opts)?;
    if res.line_search_failed {
        log::warn!("lbfgs: line search failed after {} iterations", res.iterations);
    }
    Ok((initial.with_params(res.x.clone())?, res))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_parabola() {
        let d = Dataset::from_scalars(&[-1.0, 0.5, 2.0], &[1.0, 0.25, 4.0]).unwrap();
        let fit = polyfit(&d, 2).unwrap();
        for (c, e) in fit.model.params().iter().zip([0.0, 0.0, 1.0]) {
            assert!((c - e).abs() < 1e-10);
        }
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn degree_zero_is_mean() {
        let d = Dataset::from_scalars(&[0.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 4.0, 9.0]).unwrap();
        let c = polyfit(&d, 0).unwrap().model.params()[0];
        assert!((c - 4.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_is_flagged() {
        let d = Dataset::from_scalars(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!(polyfit(&d, 3).unwrap().rank_deficient);
    }

    #[test]
    fn gaussian_fit_recovers_generator() {
        let truth = Regressor::gaussian_sum(&[(1.0, -0.5, 0.2), (0.6, 1.0, 0.1)]).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| truth.predict(&[x]).unwrap()).collect();
        let d = Dataset::from_scalars(&xs, &ys).unwrap();
        let init = Regressor::gaussian_sum(&[(0.8, -0.3, 0.3), (0.5, 0.8, 0.2)]).unwrap();
        let opts = LbfgsOptions {
            gtol: 1e-10,
            max_iterations: 1000,
            ..LbfgsOptions::default()
        };
        let (fit, res) = fit_gaussian_sum(&d, &init, &LossSpec::mse(), &opts).unwrap();
        assert!(res.value < 1e-12, "{res:?}");
        assert!((fit.predict(&[0.3]).unwrap() - truth.predict(&[0.3]).unwrap()).abs() < 1e-5);
    }
}
