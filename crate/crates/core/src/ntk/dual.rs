//! Normalized dual activations `φ̌(ξ) = E[φ(u)φ(v)] / E[φ(u)²]` for
//! standard normal `u, v` with correlation `ξ`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eig;
use crate::models::Activation;

pub const DEFAULT_QUADRATURE_ORDER: usize = 64;
/// Largest accepted change of `φ̌` when the quadrature order doubles.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;
/// Slack on `|ξ| ≤ 1` before an argument counts as out of domain.
pub const DOMAIN_TOLERANCE: f64 = 1e-9;

/// Gauss–Hermite rule for the standard normal measure; weights sum to one.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch on the probabilists' Hermite Jacobi matrix.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("quadrature order must be at least 1"));
        }
        let diag = vec![0.0; order];
        let off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
        let eig = tridiagonal_eig(&diag, &off)?;
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|k| (eig.values[k], eig.vectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[f(u)]`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// `E[f(u) g(v)]` with `corr(u, v) = ξ`, `|ξ| ≤ 1`.
    pub fn expect_pair(&self, xi: f64, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
        let s = (1.0 - xi * xi).max(0.0).sqrt();
        let mut total = 0.0;
        for (&u, &wu) in self.nodes.iter().zip(&self.weights) {
            let fu = f(u);
            if fu == 0.0 {
                continue;
            }
            let inner: f64 = self.nodes.iter().zip(&self.weights).map(|(&z, &wz)| wz * g(xi * u + s * z)).sum();
            total += wu * fu * inner;
        }
        total
    }
}

#[derive(Clone, Debug)]
pub struct DualActivation {
    activation: Activation,
    order: usize,
    output_scale: f64,
    low: GaussHermite,
    high: GaussHermite,
    /// `E[φ(u)²]` including the output scale.
    second_moment: f64,
}

impl DualActivation {
    pub fn new(activation: Activation) -> Result<Self> {
        Self::with_order(activation, DEFAULT_QUADRATURE_ORDER)
    }

    pub fn with_order(activation: Activation, order: usize) -> Result<Self> {
        let low = GaussHermite::new(order)?;
        let high = GaussHermite::new(2 * order)?;
        let mut d = Self {
            activation,
            order,
            output_scale: 1.0,
            low,
            high,
            second_moment: 0.0,
        };
        d.second_moment = d.raw_second_moment();
        if !(d.second_moment > 0.0) {
            return Err(Error::invalid(format!("activation {activation} has zero second moment")));
        }
        Ok(d)
    }

    /// Dual of `c·φ`. The normalized dual is unchanged.
    pub fn with_output_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale != 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("output scale must be finite and nonzero, got {scale}")));
        }
        self.output_scale = scale;
        self.second_moment = self.raw_second_moment();
        Ok(self)
    }

    fn raw_second_moment(&self) -> f64 {
        let c2 = self.output_scale * self.output_scale;
        match self.activation {
            Activation::Identity => c2,
            Activation::Relu => 0.5 * c2,
            act => c2 * self.high.expect(|u| act.eval(u).powi(2)),
        }
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `C` with `C · E[φ(u)φ(v)] = φ̌`, in units of the Gaussian measure.
    pub fn normalization(&self) -> f64 {
        1.0 / self.second_moment
    }

    fn check_domain(xi: f64) -> Result<f64> {
        if !xi.is_finite() || xi.abs() > 1.0 + DOMAIN_TOLERANCE {
            return Err(Error::DomainExceeded { layer: 0, value: xi });
        }
        Ok(xi.clamp(-1.0, 1.0))
    }

    fn checked(&self, xi: f64, f: impl Fn(&GaussHermite) -> f64) -> Result<f64> {
        let lo = f(&self.low);
        let hi = f(&self.high);
        let difference = (hi - lo).abs();
        if difference > QUADRATURE_TOLERANCE {
            return Err(Error::QuadratureUnstable {
                xi,
                low_order: self.order,
                high_order: 2 * self.order,
                difference,
            });
        }
        Ok(hi)
    }

    /// `E[φ(u)φ(v)]` without normalization.
    pub fn unnormalized(&self, xi: f64) -> Result<f64> {
        Ok(self.value(xi)? * self.second_moment)
    }

    /// Normalized `φ̌(ξ)`, so `φ̌(1) = 1`.
    pub fn value(&self, xi: f64) -> Result<f64> {
        let xi = Self::check_domain(xi)?;
        match self.activation {
            Activation::Identity => Ok(xi),
            Activation::Relu => Ok(((1.0 - xi * xi).max(0.0).sqrt() + (PI - xi.acos()) * xi) / PI),
            act => {
                let m = self.second_moment / (self.output_scale * self.output_scale);
                self.checked(xi, |rule| rule.expect_pair(xi, |u| act.eval(u), |v| act.eval(v)) / m)
            }
        }
    }

    /// `φ̌'(ξ) = E[φ'(u)φ'(v)] / E[φ(u)²]`.
    pub fn derivative(&self, xi: f64) -> Result<f64> {
        let xi = Self::check_domain(xi)?;
        match self.activation {
            Activation::Identity => Ok(1.0),
            Activation::Relu => Ok((PI - xi.acos()) / PI),
            act => {
                let m = self.second_moment / (self.output_scale * self.output_scale);
                self.checked(xi, |rule| {
                    rule.expect_pair(xi, |u| act.derivative(u), |v| act.derivative(v)) / m
                })
            }
        }
    }

    /// `(a, b) = (φ̌'(0), φ̌'''(0))` from the first and third Hermite
    /// coefficients of the normalized activation.
    pub fn taylor_coefficients(&self) -> (f64, f64) {
        match self.activation {
            Activation::Identity => (1.0, 0.0),
            Activation::Relu => (0.5, 0.0),
            act => {
                let m = self.second_moment / (self.output_scale * self.output_scale);
                let c1 = self.high.expect(|u| act.eval(u) * u);
                let c3 = self.high.expect(|u| act.eval(u) * (u * u * u - 3.0 * u));
                (c1 * c1 / m, c3 * c3 / m)
            }
        }
    }

    /// Whether the activation is odd, so the even Taylor terms vanish.
    pub fn is_odd(&self) -> bool {
        matches!(self.activation, Activation::Identity | Activation::Tanh | Activation::Erf)
    }
}
