use std::io::Write;

use serde::{Deserialize, Serialize};

use super::dual::DualActivation;
use super::kernels::kernel_recursion_with;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};
use crate::models::Activation;

/// Errors of the two approximations of `K_NTK^(l)` at one input pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub depth: usize,
    /// Inner product of the unit-normalized inputs.
    pub inner_product: f64,
    pub ntk: f64,
    pub nngp: f64,
    /// `Ξ = K_NTK − (l+1) aˡ xᵢᵀxⱼ`.
    pub xi: f64,
    /// `Δ = K_NTK − (l+1) K_NNGP`.
    pub delta: f64,
    pub delta_smaller: bool,
}

/// Leading cubic coefficients, `Ξ ≈ xi·b·ξ³` and `Δ ≈ delta·b·ξ³` (here
/// `b` already multiplied in).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCoefficients {
    pub depth: usize,
    pub xi: f64,
    pub delta: f64,
}

/// Closed-form cubic coefficients of `Ξ` and `Δ` for odd activations.
pub fn gap_coefficients(a: f64, b: f64, depth: usize) -> GapCoefficients {
    let l = depth as f64;
    let mut sx = 0.0;
    let mut sd = 0.0;
    for m in 1..=depth {
        let p = a.powi(2 * (m as i32 - 1));
        sx += p * (2.0 * m as f64 + l + 1.0);
        sd += m as f64 * p;
    }
    let pre = if depth == 0 { 0.0 } else { a.powi(depth as i32 - 1) };
    GapCoefficients {
        depth,
        xi: pre * sx * b / 6.0,
        delta: pre * sd * b / 3.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStudy {
    pub activation: Activation,
    pub a: f64,
    pub b: f64,
    pub rows: Vec<GapRow>,
    pub coefficients: Vec<GapCoefficients>,
}

/// Two unit vectors in `dim ≥ 2` dimensions with inner product `inner`.
pub fn unit_pair(inner: f64, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if dim < 2 || !(inner.abs() <= 1.0) {
        return Err(Error::invalid(format!("unit pair needs dim ≥ 2 and |inner| ≤ 1, got {dim}, {inner}")));
    }
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    a[0] = 1.0;
    b[0] = inner;
    b[1] = (1.0 - inner * inner).sqrt();
    Ok((a, b))
}

/// `Ξ` and `Δ` for every depth in `1..=max_depth` and every pair. Even
/// activations (SiLU, ReLU) are run but their expansion carries even terms
/// the cubic coefficients ignore.
pub fn approximation_gap_study(dual: &DualActivation, max_depth: usize, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<GapStudy> {
    if max_depth == 0 {
        return Err(Error::invalid("gap study needs depth ≥ 1"));
    }
    if !dual.is_odd() {
        log::warn!(
            "{} is not odd; the cubic gap coefficients are only approximate",
            dual.activation()
        );
    }
    let (a, b) = dual.taylor_coefficients();
    let mut rows = Vec::new();
    for (x_i, x_j) in pairs {
        let (ni, nj) = (norm2(x_i), norm2(x_j));
        if !(ni > 0.0 && nj > 0.0) {
            return Err(Error::invalid("gap study needs nonzero inputs"));
        }
        let ip = dot(x_i, x_j) / (ni * nj);
        let layers = kernel_recursion_with(dual, max_depth, x_i, x_j)?;
        let scale = if dual.activation() == Activation::Identity { ni * nj } else { 1.0 };
        for k in &layers[1..] {
            let l = k.depth as f64;
            let xi = k.ntk - (l + 1.0) * a.powi(k.depth as i32) * ip * scale;
            let delta = k.ntk - (l + 1.0) * k.nngp;
            rows.push(GapRow {
                depth: k.depth,
                inner_product: ip,
                ntk: k.ntk,
                nngp: k.nngp,
                xi,
                delta,
                delta_smaller: delta.abs() < xi.abs(),
            });
        }
    }
    Ok(GapStudy {
        activation: dual.activation(),
        a,
        b,
        rows,
        coefficients: (1..=max_depth).map(|l| gap_coefficients(a, b, l)).collect(),
    })
}

impl GapStudy {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Format(e.to_string());
        out.write_record(["activation", "depth", "inner_product", "ntk", "nngp", "xi", "delta", "delta_smaller", "xi_coefficient", "delta_coefficient"])
            .map_err(err)?;
        for r in &self.rows {
            let c = self.coefficients[r.depth - 1];
            out.write_record([
                self.activation.name().to_string(),
                r.depth.to_string(),
                r.inner_product.to_string(),
                r.ntk.to_string(),
                r.nngp.to_string(),
                r.xi.to_string(),
                r.delta.to_string(),
                r.delta_smaller.to_string(),
                c.xi.to_string(),
                c.delta.to_string(),
            ])
            .map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}
