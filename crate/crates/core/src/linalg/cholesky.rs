use serde::{Deserialize, Serialize};

use super::matrix::{dot, DenseMatrix};
use crate::error::{ensure_len, Error, Result};
use crate::scalar::Scalar;

/// Cholesky factorization of `source + jitter * I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor<T> {
    source: DenseMatrix<T>,
    jitter: T,
    lower: DenseMatrix<T>,
}

/// Relative tolerance on `|a_ij - a_ji|` accepted as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Factorizes `a + jitter * I`.
///
/// Fails with [`Error::NotPositiveDefinite`] as soon as a pivot is not
/// strictly positive; no retry happens here, callers decide whether to raise
/// the jitter (see [`cholesky_with_ladder`]).
pub fn cholesky_factor<T: Scalar>(a: &DenseMatrix<T>, jitter: T) -> Result<CholeskyFactor<T>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if jitter < T::zero() || !jitter.is_finite() {
        return Err(Error::invalid(format!("jitter must be non-negative, got {jitter}")));
    }
    let scale = T::one().max(a.max_abs());
    let asym = a.max_asymmetry();
    if asym > T::lit(SYMMETRY_TOLERANCE) * scale {
        return Err(Error::NotSymmetric {
            asymmetry: asym.to_f64_lossy(),
        });
    }

    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                index: j,
                pivot: d.to_f64_lossy(),
                jitter: jitter.to_f64_lossy(),
            });
        }
        d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            // lower triangle read from a's lower half, mirrored by symmetry
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / d;
        }
    }
    Ok(CholeskyFactor {
        source: a.clone(),
        jitter,
        lower: l,
    })
}

/// Tries each jitter in order and returns the first successful factor.
///
/// The jitter that succeeded is recorded in the factor; the error from the
/// last rung is returned when every rung fails.
pub fn cholesky_with_ladder<T: Scalar>(a: &DenseMatrix<T>, ladder: &[T]) -> Result<CholeskyFactor<T>> {
    let mut last = Error::invalid("empty jitter ladder");
    for &j in ladder {
        match cholesky_factor(a, j) {
            Ok(f) => return Ok(f),
            Err(e @ Error::NotPositiveDefinite { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Solves `(source + jitter I) x = b` for every column of `b`.
pub fn spd_solve<T: Scalar>(f: &CholeskyFactor<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    f.solve(b)
}

impl<T: Scalar> CholeskyFactor<T> {
    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &DenseMatrix<T> {
        &self.lower
    }

    pub fn source(&self) -> &DenseMatrix<T> {
        &self.source
    }

    pub fn jitter_applied(&self) -> T {
        self.jitter
    }

    /// `L y = b`.
    pub fn forward_substitute(&self, b: &[T]) -> Result<Vec<T>> {
        ensure_len("cholesky forward substitution", self.dim(), b.len())?;
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = y[i] - dot(&row[..i], &y[..i]);
            y[i] = s / row[i];
        }
        Ok(y)
    }

    /// `Lᵀ x = y`.
    pub fn back_substitute(&self, y: &[T]) -> Result<Vec<T>> {
        ensure_len("cholesky back substitution", self.dim(), y.len())?;
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[(k, i)] * x[k];
            }
            x[i] = s / self.lower[(i, i)];
        }
        Ok(x)
    }

    pub fn solve_vec(&self, b: &[T]) -> Result<Vec<T>> {
        let y = self.forward_substitute(b)?;
        self.back_substitute(&y)
    }

    pub fn solve(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        ensure_len("spd solve right-hand side rows", self.dim(), b.rows())?;
        let mut out = DenseMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.column_vec(j))?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// `vᵀ (source + jitter I)⁻¹ v`, computed as `‖L⁻¹ v‖²`.
    pub fn inverse_quad_form(&self, v: &[T]) -> Result<T> {
        let y = self.forward_substitute(v)?;
        Ok(dot(&y, &y))
    }

    pub fn inverse(&self) -> Result<DenseMatrix<T>> {
        self.solve(&DenseMatrix::identity(self.dim()))
    }

    pub fn log_det(&self) -> T {
        self.lower.diagonal().into_iter().map(|d| d.ln()).sum::<T>() * T::lit(2.0)
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| {
            let k = i.min(j) + 1;
            dot(&self.lower.row(i)[..k], &self.lower.row(j)[..k])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut a = b.gram();
        a.add_diagonal(0.1);
        a
    }

    /// Gauss-Jordan inversion with partial pivoting.
    fn gauss_jordan_inverse(a: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        let n = a.rows();
        let mut m = a.clone();
        let mut inv = DenseMatrix::identity(n);
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs()))
                .unwrap();
            for k in 0..n {
                let (t1, t2) = (m[(c, k)], m[(p, k)]);
                m[(c, k)] = t2;
                m[(p, k)] = t1;
                let (t1, t2) = (inv[(c, k)], inv[(p, k)]);
                inv[(c, k)] = t2;
                inv[(p, k)] = t1;
            }
            let d = m[(c, c)];
            for k in 0..n {
                m[(c, k)] /= d;
                inv[(c, k)] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[(r, c)];
                    for k in 0..n {
                        m[(r, k)] -= f * m[(c, k)];
                        inv[(r, k)] -= f * inv[(c, k)];
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn identity_factor_is_identity() {
        let f = cholesky_factor(&DenseMatrix::<f64>::identity(3), 0.0).unwrap();
        assert_eq!(f.lower(), &DenseMatrix::identity(3));
    }

    #[test]
    fn scalar_square_root() {
        let f = cholesky_factor(&DenseMatrix::from_rows(&[[4.0]]).unwrap(), 0.0).unwrap();
        assert_eq!(f.lower().as_slice(), &[2.0]);
    }

    #[test]
    fn reconstruction_of_random_spd() {
        let a = random_spd(5, 7);
        let f = cholesky_factor(&a, 0.0).unwrap();
        let err = f.reconstruct().sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(err < 1e-12, "reconstruction error {err}");
    }

    #[test]
    fn jitter_is_part_of_the_factored_matrix() {
        let a = random_spd(4, 3);
        let f = cholesky_factor(&a, 0.5).unwrap();
        let mut shifted = a.clone();
        shifted.add_diagonal(0.5);
        let err = f.reconstruct().sub(&shifted).unwrap().frobenius_norm() / shifted.frobenius_norm();
        assert!(err < 1e-10);
        assert_eq!(f.jitter_applied(), 0.5);
    }

    #[test]
    fn diagonal_solve() {
        let f = cholesky_factor(&DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]).unwrap(), 0.0).unwrap();
        let x = spd_solve(&f, &DenseMatrix::column(&[2.0, 4.0])).unwrap();
        assert!(x.as_slice().iter().all(|v: &f64| (v - 1.0).abs() < 1e-15));
        let id = cholesky_factor(&DenseMatrix::<f64>::identity(3), 0.0).unwrap();
        assert_eq!(id.solve_vec(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn solve_matches_explicit_inverse_oracle() {
        for seed in 0..10 {
            let a = random_spd(6, 100 + seed);
            let f = cholesky_factor(&a, 0.0).unwrap();
            let inv = gauss_jordan_inverse(&a);
            let b = DenseMatrix::from_fn(6, 2, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5));
            let x = f.solve(&b).unwrap();
            let oracle = inv.matmul(&b).unwrap();
            let rel = x.sub(&oracle).unwrap().frobenius_norm() / oracle.frobenius_norm();
            assert!(rel < 1e-9, "seed {seed}: {rel}");
        }
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let indefinite = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky_factor(&indefinite, 0.0),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        let asym = DenseMatrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(cholesky_factor(&asym, 0.0), Err(Error::NotSymmetric { .. })));
        let rect = DenseMatrix::<f64>::zeros(2, 3);
        assert!(matches!(cholesky_factor(&rect, 0.0), Err(Error::NotSquare { .. })));
        assert!(cholesky_factor(&DenseMatrix::<f64>::identity(2), -1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_on_solve() {
        let f = cholesky_factor(&DenseMatrix::<f64>::identity(3), 0.0).unwrap();
        assert!(matches!(
            f.solve(&DenseMatrix::zeros(2, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ladder_reports_the_jitter_used() {
        let singular = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let f = cholesky_with_ladder(&singular, &[0.0, 1e-6]).unwrap();
        assert_eq!(f.jitter_applied(), 1e-6);
        assert!(cholesky_with_ladder(&singular, &[0.0]).is_err());
    }

    #[test]
    fn single_precision_factorization() {
        let a = DenseMatrix::<f32>::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let f = cholesky_factor(&a, 0.0).unwrap();
        let x = f.solve_vec(&[6.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }
}
