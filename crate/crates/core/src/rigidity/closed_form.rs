use crate::error::{ensure_len, Error, Result};
use crate::linalg::cholesky_factor;
use crate::Matrix;

/// `x_⋆ᵀ(XᵀX + Σ)⁻¹x_⋆`.
pub fn linear_pr_closed_form(x_star: &[f64], x: &Matrix, sigma: &Matrix) -> Result<f64> {
    let p = x_star.len();
    ensure_len("design columns", p, x.cols())?;
    ensure_len("prior rows", p, sigma.rows())?;
    ensure_len("prior cols", p, sigma.cols())?;
    let a = x.gram().add(sigma)?;
    cholesky_factor(&a, 0.0)?.inverse_quad_form(x_star)
}

/// `k_⋆ᵀ(K_nmᵀK_nm + σ²K_mm)⁻¹k_⋆`.
pub fn gpr_pr_closed_form(k_star: &[f64], k_nm: &Matrix, k_mm: &Matrix, noise: f64) -> Result<f64> {
    let m = k_star.len();
    ensure_len("K_nm columns", m, k_nm.cols())?;
    ensure_len("K_mm rows", m, k_mm.rows())?;
    ensure_len("K_mm cols", m, k_mm.cols())?;
    if !(noise >= 0.0) {
        return Err(Error::invalid(format!("noise variance must be non-negative, got {noise}")));
    }
    let a = k_nm.gram().add(&k_mm.scaled(noise))?;
    cholesky_factor(&a, 0.0)?.inverse_quad_form(k_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_only() {
        let x = Matrix::zeros(0, 2);
        let v = linear_pr_closed_form(&[3.0, 4.0], &x, &Matrix::identity(2)).unwrap();
        assert!((v - 25.0).abs() < 1e-14);
    }

    #[test]
    fn hand_values() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let v = linear_pr_closed_form(&[1.0], &x, &Matrix::identity(1)).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        let one = Matrix::identity(1);
        assert!((gpr_pr_closed_form(&[1.0], &one, &one, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gpr_pr_closed_form(&[0.0], &one, &one, 1.0).unwrap(), 0.0);
    }
}
