use super::dual::DualActivation;
use super::kernels::{kernel_pair, kernel_recursion_with};
use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::{dot, sym_eig};
use crate::models::Regressor;
use crate::Matrix;

/// Train–train, train–query and query–query kernels for one query point.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorKernels {
    pub ntk_train: Matrix,
    pub nngp_train: Matrix,
    pub ntk_star: Vec<f64>,
    pub nngp_star: Vec<f64>,
    pub nngp_self: f64,
}

impl PosteriorKernels {
    fn check(&self) -> Result<usize> {
        let n = self.ntk_train.rows();
        ensure_len("NTK train columns", n, self.ntk_train.cols())?;
        ensure_len("NNGP train rows", n, self.nngp_train.rows())?;
        ensure_len("NNGP train columns", n, self.nngp_train.cols())?;
        ensure_len("NTK query vector", n, self.ntk_star.len())?;
        ensure_len("NNGP query vector", n, self.nngp_star.len())?;
        Ok(n)
    }
}

pub trait KernelProvider {
    fn kernels(&self, train: &Dataset, x_star: &[f64]) -> Result<PosteriorKernels>;
}

/// Infinite-width kernels from the layer recursion.
#[derive(Clone, Debug)]
pub struct RecursiveKernels {
    pub dual: DualActivation,
    pub depth: usize,
}

impl KernelProvider for RecursiveKernels {
    fn kernels(&self, train: &Dataset, x_star: &[f64]) -> Result<PosteriorKernels> {
        let pair = kernel_pair(&self.dual, self.depth, &train.features)?;
        let mut ntk_star = Vec::with_capacity(train.len());
        let mut nngp_star = Vec::with_capacity(train.len());
        for i in 0..train.len() {
            let k = *kernel_recursion_with(&self.dual, self.depth, train.x(i), x_star)?.last().expect("depth 0 present");
            ntk_star.push(k.ntk);
            nngp_star.push(k.nngp);
        }
        let own = *kernel_recursion_with(&self.dual, self.depth, x_star, x_star)?.last().expect("depth 0 present");
        Ok(PosteriorKernels {
            ntk_train: pair.ntk,
            nngp_train: pair.nngp,
            ntk_star,
            nngp_star,
            nngp_self: own.nngp,
        })
    }
}

/// `K_NNGP ≈ σ_w² FFᵀ` and `K_NTK ≈ c FFᵀ` from a model's last-layer features.
#[derive(Clone, Debug)]
pub struct FeatureKernels<'a> {
    pub model: &'a Regressor,
    pub c: f64,
    pub sigma_w2: f64,
}

impl KernelProvider for FeatureKernels<'_> {
    fn kernels(&self, train: &Dataset, x_star: &[f64]) -> Result<PosteriorKernels> {
        let f = crate::llpr::feature_matrix(self.model, train)?;
        let fs = self.model.last_layer_features(x_star)?;
        Ok(feature_kernels(&f, &fs, self.c, self.sigma_w2))
    }
}

pub fn feature_kernels(features: &Matrix, f_star: &[f64], c: f64, sigma_w2: f64) -> PosteriorKernels {
    let ff = features.matmul(&features.transpose()).expect("conforming shapes");
    let fs = features.matvec(f_star).expect("conforming shapes");
    PosteriorKernels {
        ntk_train: ff.scaled(c),
        nngp_train: ff.scaled(sigma_w2),
        ntk_star: fs.iter().map(|v| c * v).collect(),
        nngp_star: fs.iter().map(|v| sigma_w2 * v).collect(),
        nngp_self: sigma_w2 * dot(f_star, f_star),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of the linearized network after gradient-descent time
/// `t` at learning rate `η` (`t = ∞` allowed). With `M = K⁻¹(I − e^{−ηKt})`
/// and `u = M k_NTK(⋆)`, the variance is
/// `k_NNGP(⋆,⋆) + uᵀK_NNGP u − 2 uᵀk_NNGP(⋆)`.
pub fn linearized_posterior_kernels(k: &PosteriorKernels, y: &[f64], eta: f64, t: f64) -> Result<Posterior> {
    let n = k.check()?;
    ensure_len("training targets", n, y.len())?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {eta}")));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("training time must be non-negative, got {t}")));
    }
    if n == 0 || t == 0.0 {
        return Ok(Posterior {
            mean: 0.0,
            variance: k.nngp_self,
        });
    }
    let eig = sym_eig(&k.ntk_train)?;
    let top = eig.values.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * top * n as f64;
    let mut g = Vec::with_capacity(n);
    for (idx, &lam) in eig.values.iter().enumerate() {
        if lam < -tol || (t.is_infinite() && lam <= tol) {
            return Err(Error::NotPositiveDefinite {
                index: idx,
                pivot: lam,
                jitter: 0.0,
            });
        }
        g.push(if t.is_infinite() {
            1.0 / lam
        } else if lam <= tol {
            eta * t
        } else {
            -(-eta * lam * t).exp_m1() / lam
        });
    }
    let m = eig.spectral_map_values(&g);
    let u = m.matvec(&k.ntk_star)?;
    let mean = dot(&u, y);
    let variance = k.nngp_self + dot(&u, &k.nngp_train.matvec(&u)?) - 2.0 * dot(&u, &k.nngp_star);
    let scale = k.nngp_self.abs().max(1.0);
    let variance = if variance < 0.0 && variance > -1e-10 * scale { 0.0 } else { variance };
    Ok(Posterior { mean, variance })
}

pub fn linearized_posterior(
    train: &Dataset,
    x_star: &[f64],
    kernels: &dyn KernelProvider,
    eta: f64,
    t: f64,
) -> Result<Posterior> {
    let k = kernels.kernels(train, x_star)?;
    linearized_posterior_kernels(&k, &train.targets, eta, t)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::cholesky_factor;
    use crate::models::Activation;

    #[test]
    fn time_zero_is_prior() {
        let d = DualActivation::new(Activation::Tanh).unwrap();
        let train = Dataset::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(), vec![1.0, -1.0]).unwrap();
        let p = linearized_posterior(&train, &[0.6, 0.8], &RecursiveKernels { dual: d, depth: 2 }, 0.1, 0.0).unwrap();
        assert_eq!(p.mean, 0.0);
        assert!((p.variance - 1.0).abs() < 1e-8);
    }

    #[test]
    fn infinite_time_feature_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = Matrix::from_fn(5, 7, |_, _| rng.random_range(-1.0..1.0));
        let fs: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (c, sigma_w2) = (4.0, 0.7);
        let k = feature_kernels(&f, &fs, c, sigma_w2);
        let y = vec![0.0; 5];
        let p = linearized_posterior_kernels(&k, &y, 0.1, f64::INFINITY).unwrap();
        let ff = f.matmul(&f.transpose()).unwrap();
        let proj = cholesky_factor(&ff, 0.0).unwrap().inverse_quad_form(&f.matvec(&fs).unwrap()).unwrap();
        let want = sigma_w2 * (dot(&fs, &fs) - proj);
        assert!((p.variance - want).abs() < 1e-10, "{} vs {want}", p.variance);
        let late = linearized_posterior_kernels(&k, &y, 0.1, 1e6).unwrap();
        assert!((late.variance - want).abs() < 1e-8);
    }

    #[test]
    fn single_point_interpolates() {
        let k = PosteriorKernels {
            ntk_train: Matrix::identity(1),
            nngp_train: Matrix::identity(1),
            ntk_star: vec![1.0],
            nngp_star: vec![1.0],
            nngp_self: 1.0,
        };
        let p = linearized_posterior_kernels(&k, &[2.5], 0.5, 100.0).unwrap();
        assert!(p.variance.abs() < 1e-12);
        assert!((p.mean - 2.5).abs() < 1e-12);
    }

    #[test]
    fn variance_non_negative_on_recursive_kernels() {
        let d = DualActivation::new(Activation::Erf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let train = Dataset::new(xs, (0..6).map(|i| i as f64).collect()).unwrap();
        let prov = RecursiveKernels { dual: d, depth: 2 };
        for t in [0.5, 5.0, 50.0, f64::INFINITY] {
            for eta in [0.01, 0.3] {
                let p = linearized_posterior(&train, &[0.2, -0.4, 0.9], &prov, eta, t).unwrap();
                assert!(p.variance >= 0.0, "{t} {eta} {}", p.variance);
            }
        }
    }
}
