use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::{cholesky_factor, dot};
use crate::Matrix;

/// Covariance function of the sparse GPR model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `k(x, x') = x·x'`.
    Linear,
    /// `k(x, x') = exp(−‖x − x'‖² / (2ℓ²))`.
    Rbf { length_scale: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { length_scale } if *length_scale > 0.0 && length_scale.is_finite() => Ok(()),
            KernelSpec::Rbf { length_scale } => Err(Error::invalid(format!(
                "rbf length scale must be positive, got {length_scale}"
            ))),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { length_scale } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * length_scale * length_scale)).exp()
            }
        }
    }

    /// `∂k(x, z)/∂x`.
    pub fn input_gradient(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        match self {
            KernelSpec::Linear => z.to_vec(),
            KernelSpec::Rbf { length_scale } => {
                let k = self.eval(x, z);
                let l2 = length_scale * length_scale;
                x.iter().zip(z).map(|(a, b)| -k * (a - b) / l2).collect()
            }
        }
    }

    /// Kernel evaluations of `x` against every row of `points`.
    pub fn vector(&self, x: &[f64], points: &Matrix) -> Vec<f64> {
        (0..points.rows()).map(|m| self.eval(x, points.row(m))).collect()
    }

    /// `K_ab[i, j] = k(a_i, b_j)`.
    pub fn matrix(&self, a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.rows(), |i, j| self.eval(a.row(i), b.row(j)))
    }
}

/// Fits the subset-of-regressors weights
/// `w = (K_nmᵀ K_nm + σ² K_mm)⁻¹ K_nmᵀ y`.
pub fn gpr_sor_fit(train: &Dataset, inducing: &Matrix, kernel: KernelSpec, noise: f64) -> Result<Regressor> {
    kernel.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("gpr-sor training set"));
    }
    if inducing.rows() == 0 {
        return Err(Error::EmptyInput("inducing points"));
    }
    ensure_len("inducing point dimension", train.n_features(), inducing.cols())?;
    if inducing.rows() > train.len() {
        return Err(Error::invalid(format!(
            "{} inducing points exceed {} training samples",
            inducing.rows(),
            train.len()
        )));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::invalid(format!("noise variance must be non-negative, got {noise}")));
    }
    let knm = kernel.matrix(&train.features, inducing);
    let kmm = kernel.matrix(inducing, inducing);
    let a = knm.gram().add(&kmm.scaled(noise))?;
    let f = cholesky_factor(&a, 0.0)?;
    let weights = f.solve_vec(&knm.tr_matvec(&train.targets)?)?;
    Ok(Regressor::GprSor {
        kernel,
        inducing: inducing.clone(),
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_point() -> (Dataset, Matrix) {
        let x = [-1.0, -0.4, 0.1, 0.6, 1.2];
        let y = [0.3, -0.2, 0.5, 0.9, 0.1];
        let d = Dataset::from_scalars(&x, &y).unwrap();
        let z = Matrix::from_vec(3, 1, vec![-0.8, 0.0, 0.9]).unwrap();
        (d, z)
    }

    #[test]
    fn single_point_linear_kernel() {
        let d = Dataset::from_scalars(&[1.0], &[1.0]).unwrap();
        let z = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let m = gpr_sor_fit(&d, &z, KernelSpec::Linear, 0.0).unwrap();
        assert_eq!(m.params(), &[1.0]);
        assert!((m.predict(&[1.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_shrink_with_noise() {
        let (d, z) = five_point();
        let k = KernelSpec::Rbf { length_scale: 0.7 };
        let mut last = f64::INFINITY;
        for s2 in [1e-2, 1e-1, 1.0, 1e1, 1e2, 1e4] {
            let n = crate::linalg::norm2(gpr_sor_fit(&d, &z, k.clone(), s2).unwrap().params());
            assert!(n < last);
            last = n;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn rbf_fit_matches_normal_equation_oracle() {
        let (d, z) = five_point();
        let l: f64 = 0.7;
        let s2 = 0.05;
        let k = |a: f64, b: f64| (-(a - b).powi(2) / (2.0 * l * l)).exp();
        // Explicit normal equations solved by Gaussian elimination.
        let xs = d.features.as_slice();
        let zs = z.as_slice();
        let mut a = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = xs.iter().map(|&x| k(x, zs[i]) * k(x, zs[j])).sum::<f64>() + s2 * k(zs[i], zs[j]);
            }
            a[i][3] = xs.iter().zip(&d.targets).map(|(&x, &y)| k(x, zs[i]) * y).sum();
        }
        for c in 0..3 {
            for r in (c + 1)..3 {
                let m = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= m * a[c][k];
                }
            }
        }
        let mut w = [0.0; 3];
        for i in (0..3).rev() {
            w[i] = (a[i][3] - ((i + 1)..3).map(|j| a[i][j] * w[j]).sum::<f64>()) / a[i][i];
        }
        let m = gpr_sor_fit(&d, &z, KernelSpec::Rbf { length_scale: l }, s2).unwrap();
        for (a, b) in m.params().iter().zip(w) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rbf_input_gradient() {
        let k = KernelSpec::Rbf { length_scale: 0.5 };
        let (x, z) = ([0.3, -0.1], [0.0, 0.4]);
        let g = k.input_gradient(&x, &z);
        let h = 1e-6;
        for j in 0..2 {
            let mut up = x;
            up[j] += h;
            let mut dn = x;
            dn[j] -= h;
            assert!(((k.eval(&up, &z) - k.eval(&dn, &z)) / (2.0 * h) - g[j]).abs() < 1e-8);
        }
    }
}
