//! Dense kernels: row-major matrices, Cholesky, symmetric eigensolver, QR.

mod cholesky;
mod eigen;
mod matrix;
mod qr;

pub use cholesky::{cholesky_factor, cholesky_with_ladder, spd_solve, CholeskyFactor, SYMMETRY_TOLERANCE};
pub use eigen::{orthogonality_error, sym_eig, sym_eig_truncated, tridiagonal_eig, SymEigen};
pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub use qr::{lstsq, LeastSquares};

/// Default jitter ladder tried by callers that opt into retries.
pub const DEFAULT_JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4];
