use super::eigen::sym_eig;
use super::matrix::DenseMatrix;
use crate::error::{ensure_len, Error, Result};
use crate::scalar::Scalar;

/// Least-squares solution of `a x ≈ b`.
#[derive(Clone, Debug)]
pub struct LeastSquares<T> {
    pub solution: Vec<T>,
    pub rank: usize,
    /// Set when `a` has fewer independent columns than columns; the
    /// solution is then the minimum-norm one.
    pub rank_deficient: bool,
}

/// Householder QR least squares; falls back to the pseudo-inverse through
/// the eigendecomposition of `aᵀa` when the column rank is deficient.
pub fn lstsq<T: Scalar>(a: &DenseMatrix<T>, b: &[T]) -> Result<LeastSquares<T>> {
    let (m, n) = a.shape();
    ensure_len("least-squares right-hand side", m, b.len())?;
    if n == 0 {
        return Err(Error::EmptyInput("least-squares design matrix"));
    }
    let tol = T::lit(1e-12).max(T::from_usize_lossy(m.max(n)) * T::epsilon());
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let steps = m.min(n);
    let mut diag_max = T::zero();
    let mut rank = 0;
    for k in 0..steps {
        let norm: T = (k..m).map(|i| r[(i, k)].powi(2)).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if r[(k, k)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        for j in k..n {
            let s: T = (k..m).map(|i| v[i - k] * r[(i, j)]).sum::<T>() * T::lit(2.0) / vnorm2;
            for i in k..m {
                r[(i, j)] -= s * v[i - k];
            }
        }
        let s: T = (k..m).map(|i| v[i - k] * qtb[i]).sum::<T>() * T::lit(2.0) / vnorm2;
        for i in k..m {
            qtb[i] -= s * v[i - k];
        }
    }
    for k in 0..steps {
        diag_max = diag_max.max(r[(k, k)].abs());
    }
    for k in 0..steps {
        if r[(k, k)].abs() > tol * diag_max {
            rank += 1;
        }
    }
    if rank == n {
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = qtb[i];
            for j in (i + 1)..n {
                s -= r[(i, j)] * x[j];
            }
            x[i] = s / r[(i, i)];
        }
        return Ok(LeastSquares {
            solution: x,
            rank,
            rank_deficient: false,
        });
    }
    let gram = a.gram();
    let atb = a.tr_matvec(b)?;
    let eig = sym_eig(&gram)?;
    let lmax = eig.values.first().copied().unwrap_or(T::zero()).max(T::zero());
    let cutoff = tol * tol.sqrt() * lmax.max(T::min_positive_value());
    let mut x = vec![T::zero(); n];
    let mut eff_rank = 0;
    for (k, &l) in eig.values.iter().enumerate() {
        if l <= cutoff {
            continue;
        }
        eff_rank += 1;
        let v = eig.vector(k);
        let c = super::matrix::dot(&v, &atb) / l;
        super::matrix::axpy(c, &v, &mut x);
    }
    Ok(LeastSquares {
        solution: x,
        rank: eff_rank,
        rank_deficient: true,
    })
}
