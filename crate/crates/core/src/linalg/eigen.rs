//! Symmetric eigendecomposition: Householder tridiagonalization followed by
//! implicit-shift QL iteration (the EISPACK `tred2`/`tql2` pair).

use super::matrix::{dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigenpairs sorted by descending eigenvalue; eigenvectors are the columns
/// of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: DenseMatrix<T>,
}

impl<T: Scalar> SymEigen<T> {
    pub fn vector(&self, k: usize) -> Vec<T> {
        self.vectors.column_vec(k)
    }

    /// `V diag(g(λ)) Vᵀ`.
    pub fn spectral_map(&self, g: impl Fn(T) -> T) -> DenseMatrix<T> {
        let gl: Vec<T> = self.values.iter().map(|&l| g(l)).collect();
        self.spectral_map_values(&gl)
    }

    /// `V diag(gl) Vᵀ` for one value per eigenpair.
    pub fn spectral_map_values(&self, gl: &[T]) -> DenseMatrix<T> {
        assert_eq!(gl.len(), self.values.len(), "one value per eigenpair");
        let n = self.vectors.rows();
        let k = self.values.len();
        DenseMatrix::from_fn(n, n, |i, j| {
            let (ri, rj) = (self.vectors.row(i), self.vectors.row(j));
            (0..k).fold(T::zero(), |acc, m| acc + ri[m] * gl[m] * rj[m])
        })
    }
}

const MAX_SWEEPS_PER_VALUE: usize = 60;

/// Full decomposition of a symmetric matrix.
pub fn sym_eig<T: Scalar>(a: &DenseMatrix<T>) -> Result<SymEigen<T>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let scale = T::one().max(a.max_abs());
    let asym = a.max_asymmetry();
    if asym > T::lit(super::cholesky::SYMMETRY_TOLERANCE) * scale {
        return Err(Error::NotSymmetric {
            asymmetry: asym.to_f64_lossy(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let mut v = a.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    Ok(sorted_descending(d, v))
}

/// Top-`k` eigenpairs of a symmetric matrix.
///
/// Computes the full decomposition then truncates; each returned pair is
/// checked against `‖a v − λ v‖ ≤ tol · ‖a‖_F`.
pub fn sym_eig_truncated<T: Scalar>(a: &DenseMatrix<T>, k: usize) -> Result<SymEigen<T>> {
    let n = a.rows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must lie in 1..={n}, got {k}")));
    }
    let full = sym_eig(a)?;
    let tol = T::lit(1e-8).max(T::lit(100.0) * T::epsilon()) * T::one().max(a.frobenius_norm());
    let mut worst = T::zero();
    for m in 0..k {
        let vk = full.vector(m);
        let av = a.matvec(&vk)?;
        let r: T = av
            .iter()
            .zip(&vk)
            .map(|(&x, &y)| (x - full.values[m] * y).powi(2))
            .sum::<T>()
            .sqrt();
        worst = worst.max(r);
    }
    if worst > tol {
        return Err(Error::ConvergenceFailure {
            residual: worst.to_f64_lossy(),
        });
    }
    let vectors = DenseMatrix::from_fn(n, k, |i, j| full.vectors[(i, j)]);
    Ok(SymEigen {
        values: full.values[..k].to_vec(),
        vectors,
    })
}

/// Eigenpairs of the symmetric tridiagonal matrix with main diagonal `diag`
/// and off-diagonal `off` (`off[i]` couples `i` and `i + 1`).
pub fn tridiagonal_eig<T: Scalar>(diag: &[T], off: &[T]) -> Result<SymEigen<T>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::EmptyInput("tridiagonal matrix"));
    }
    if off.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            context: "tridiagonal off-diagonal",
            expected: n - 1,
            found: off.len(),
        });
    }
    let mut v = DenseMatrix::identity(n);
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[1..].copy_from_slice(off);
    tql2(&mut v, &mut d, &mut e)?;
    Ok(sorted_descending(d, v))
}

fn sorted_descending<T: Scalar>(d: Vec<T>, v: DenseMatrix<T>) -> SymEigen<T> {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = DenseMatrix::from_fn(v.rows(), n, |r, c| v[(r, order[c])]);
    SymEigen { values, vectors }
}

fn tred2<T: Scalar>(v: &mut DenseMatrix<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let scale: T = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = T::zero();
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
                v[(j, i)] = T::zero();
            }
        } else {
            for x in d[..i].iter_mut() {
                *x /= scale;
                h += *x * *x;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for x in e[..i].iter_mut() {
                *x = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[(k, j)] -= upd;
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[(k, j)] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = T::zero();
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

fn tql2<T: Scalar>(v: &mut DenseMatrix<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let two = T::lit(2.0);
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS_PER_VALUE {
                    return Err(Error::ConvergenceFailure {
                        residual: e[l].abs().to_f64_lossy(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d[(l + 2)..].iter_mut() {
                    *x -= h;
                }
                f += h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let vk1 = v[(k, i + 1)];
                        let vk = v[(k, i)];
                        v[(k, i + 1)] = s * vk + c * vk1;
                        v[(k, i)] = c * vk - s * vk1;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    Ok(())
}

/// Reorthogonalized check helper used by callers that need `Vᵀ V = I`.
pub fn orthogonality_error<T: Scalar>(vectors: &DenseMatrix<T>) -> T {
    let k = vectors.cols();
    let mut worst = T::zero();
    for a in 0..k {
        let va = vectors.column_vec(a);
        for b in a..k {
            let vb = vectors.column_vec(b);
            let target = if a == b { T::one() } else { T::zero() };
            worst = worst.max((dot(&va, &vb) - target).abs());
        }
    }
    worst
}
