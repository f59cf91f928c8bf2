use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::Matrix;

/// Inputs of the seven-point cos² toy set: two tight clusters and a
/// point near each end.
pub const COS2_TOY_POINTS: [f64; 7] = [-0.8, -0.75, 0.0, 0.05, 0.07, 0.7, 0.73];

/// Noise level of the cos² toy set.
pub const COS2_TOY_NOISE: f64 = 0.01;

fn check_noise(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise must be finite and non-negative, got {sigma}")));
    }
    Ok(())
}

/// `y = cos²(x) + N(0, σ²)` at the given inputs.
pub fn synth_cos2(sigma: f64, xs: &[f64], seed: u64) -> Result<Dataset> {
    check_noise(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = xs
        .iter()
        .map(|&x| {
            let e: f64 = rng.sample(StandardNormal);
            x.cos().powi(2) + sigma * e
        })
        .collect::<Vec<_>>();
    Dataset::from_scalars(xs, &y)
}

/// Recipe of [`synth_bimodal`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BimodalSpec {
    pub n_samples: usize,
    pub n_features: usize,
    /// Fraction of samples drawn in the low mode of feature 0.
    pub low_fraction: f64,
    pub low_center: f64,
    pub high_center: f64,
    pub mode_std: f64,
    pub noise: f64,
}

impl Default for BimodalSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            n_features: 4,
            low_fraction: 0.3,
            low_center: -2.0,
            high_center: 1.0,
            mode_std: 0.45,
            noise: 0.05,
        }
    }
}

/// Regression data whose feature 0 is a two-component Gaussian mixture.
/// The remaining features are standard normal and
/// `y = sin(x₀) + ½ x₁x₂ + 0.3 x₃² + … + noise`.
pub fn synth_bimodal(spec: &BimodalSpec, seed: u64) -> Result<Dataset> {
    check_noise(spec.noise)?;
    if spec.n_features < 1 || spec.n_samples == 0 {
        return Err(Error::invalid("bimodal data needs at least one feature and one sample"));
    }
    if !(0.0..=1.0).contains(&spec.low_fraction) || !(spec.mode_std > 0.0) {
        return Err(Error::invalid("low_fraction must lie in [0, 1] and mode_std be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.n_features;
    let mut x = Matrix::zeros(spec.n_samples, d);
    let mut y = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let center = if rng.random::<f64>() < spec.low_fraction { spec.low_center } else { spec.high_center };
        let z: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = center + spec.mode_std * z;
        for j in 1..d {
            x[(i, j)] = rng.sample(StandardNormal);
        }
        let r = x.row(i);
        let mut t = r[0].sin();
        if d > 2 {
            t += 0.5 * r[1] * r[2];
        } else if d == 2 {
            t += 0.5 * r[1];
        }
        for (j, v) in r.iter().enumerate().skip(3) {
            t += 0.3 / (j as f64 - 2.0) * v * v;
        }
        let e: f64 = rng.sample(StandardNormal);
        y.push(t + spec.noise * e);
    }
    Dataset::new(x, y)
}

/// Smooth nonlinear target on `d` uniform inputs in `[-2, 2]` with
/// input-dependent noise `σ(x) = base_noise·(1 + |x₀|)`.
pub fn synth_heteroscedastic(n: usize, d: usize, base_noise: f64, seed: u64) -> Result<Dataset> {
    check_noise(base_noise)?;
    if n == 0 || d == 0 {
        return Err(Error::invalid("heteroscedastic data needs n ≥ 1 and d ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = rand_distr::Uniform::new(-2.0, 2.0).map_err(|e| Error::invalid(e.to_string()))?;
    let x = Matrix::from_fn(n, d, |_, _| u.sample(&mut rng));
    let y = (0..n)
        .map(|i| {
            let r = x.row(i);
            let mut t = (1.5 * r[0]).sin();
            for (j, v) in r.iter().enumerate().skip(1) {
                t += 0.5 * (v * (j as f64 + 1.0) / 2.0).cos() * r[0].tanh();
            }
            let sd = base_noise * (1.0 + r[0].abs());
            let e: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
            t + sd * e
        })
        .collect();
    Dataset::new(x, y)
}
