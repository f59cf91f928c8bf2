//! Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::linalg::{axpy, dot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    #[serde(default = "d_memory")]
    pub memory: usize,
    #[serde(default = "d_max_iter")]
    pub max_iterations: usize,
    /// Stop once `‖∇f‖∞ ≤ gtol`.
    #[serde(default = "d_gtol")]
    pub gtol: f64,
    #[serde(default = "d_c1")]
    pub c1: f64,
    #[serde(default = "d_c2")]
    pub c2: f64,
    #[serde(default = "d_ls")]
    pub max_line_search: usize,
}

fn d_memory() -> usize {
    10
}
fn d_max_iter() -> usize {
    500
}
fn d_gtol() -> f64 {
    1e-8
}
fn d_c1() -> f64 {
    1e-4
}
fn d_c2() -> f64 {
    0.9
}
fn d_ls() -> usize {
    40
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: d_memory(),
            max_iterations: d_max_iter(),
            gtol: d_gtol(),
            c1: d_c1(),
            c2: d_c2(),
            max_line_search: d_ls(),
        }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::invalid("lbfgs memory must be at least 1"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::invalid(format!(
                "wolfe constants need 0 < c1 < c2 < 1, got {} and {}",
                self.c1, self.c2
            )));
        }
        if !(self.gtol >= 0.0) {
            return Err(Error::invalid("gtol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// The line search could not satisfy the Wolfe conditions; `x` is the
    /// best iterate seen.
    pub line_search_failed: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Evaluator<'a, F> {
    f: &'a mut F,
    count: usize,
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Evaluator<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.count += 1;
        (self.f)(x)
    }
}

struct Probe {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

/// Minimizes `objective` starting from `x0`.
///
/// `objective` must return a finite value and gradient at `x0`.
pub fn lbfgs_minimize<F>(objective: F, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    lbfgs_minimize_with(objective, x0, opts, |_, _, _| Ok(()))
}

/// As [`lbfgs_minimize`], calling `on_iter(iteration, x, value)` after
/// every accepted step.
pub fn lbfgs_minimize_with<F, C>(mut objective: F, x0: &[f64], opts: &LbfgsOptions, mut on_iter: C) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(usize, &[f64], f64) -> Result<()>,
{
    opts.validate()?;
    let mut ev = Evaluator {
        f: &mut objective,
        count: 0,
    };
    let mut x = x0.to_vec();
    let (mut fx, mut g) = ev.eval(&x)?;
    ensure_len("objective gradient", x.len(), g.len())?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at starting point"));
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut line_search_failed = false;
    while iterations < opts.max_iterations && inf_norm(&g) > opts.gtol {
        let mut d = two_loop(&g, &s_hist, &y_hist, &rho_hist);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // Not a descent direction: restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        let alpha0 = if s_hist.is_empty() {
            (1.0 / inf_norm(&g).max(1e-300)).min(1.0)
        } else {
            1.0
        };
        let probe = match strong_wolfe(&mut ev, &x, fx, slope, &d, alpha0, opts)? {
            Some(p) => p,
            None => {
                line_search_failed = true;
                break;
            }
        };
        let s: Vec<f64> = d.iter().map(|v| probe.alpha * v).collect();
        let yv: Vec<f64> = probe.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        axpy(1.0, &s, &mut x);
        fx = probe.value;
        g = probe.grad;
        iterations += 1;
        on_iter(iterations, &x, fx)?;
        let sy = dot(&s, &yv);
        if sy > 1e-16 * crate::linalg::norm2(&s) * crate::linalg::norm2(&yv) {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
            rho_hist.push(1.0 / sy);
        }
    }
    let gn = inf_norm(&g);
    Ok(LbfgsResult {
        x,
        value: fx,
        grad_inf_norm: gn,
        iterations,
        evaluations: ev.count,
        converged: gn <= opts.gtol,
        line_search_failed,
    })
}

fn two_loop(g: &[f64], s: &[Vec<f64>], y: &[Vec<f64>], rho: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s.len();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        alpha[i] = rho[i] * dot(&s[i], &q);
        axpy(-alpha[i], &y[i], &mut q);
    }
    if k > 0 {
        let gamma = dot(&s[k - 1], &y[k - 1]) / dot(&y[k - 1], &y[k - 1]);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for i in 0..k {
        let b = rho[i] * dot(&y[i], &q);
        axpy(alpha[i] - b, &s[i], &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn probe_at<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    ev: &mut Evaluator<'_, F>,
    x: &[f64],
    d: &[f64],
    alpha: f64,
) -> Result<Probe> {
    let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
    let (value, grad) = ev.eval(&xt)?;
    let slope = dot(&grad, d);
    Ok(Probe {
        alpha,
        value: if value.is_finite() { value } else { f64::INFINITY },
        grad,
        slope,
    })
}

/// Returns a step satisfying the strong Wolfe conditions, or `None`.
fn strong_wolfe<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    ev: &mut Evaluator<'_, F>,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    alpha0: f64,
    opts: &LbfgsOptions,
) -> Result<Option<Probe>> {
    let (c1, c2) = (opts.c1, opts.c2);
    let mut prev = Probe {
        alpha: 0.0,
        value: f0,
        grad: Vec::new(),
        slope: slope0,
    };
    let mut alpha = alpha0;
    for i in 0..opts.max_line_search {
        let cur = probe_at(ev, x, d, alpha)?;
        if cur.value > f0 + c1 * alpha * slope0 || (i > 0 && cur.value >= prev.value) {
            return zoom(ev, x, d, f0, slope0, prev, cur, opts);
        }
        if cur.slope.abs() <= -c2 * slope0 {
            return Ok(Some(cur));
        }
        if cur.slope >= 0.0 {
            return zoom(ev, x, d, f0, slope0, cur, prev, opts);
        }
        alpha *= 2.0;
        prev = cur;
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn zoom<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    ev: &mut Evaluator<'_, F>,
    x: &[f64],
    d: &[f64],
    f0: f64,
    slope0: f64,
    mut lo: Probe,
    mut hi: Probe,
    opts: &LbfgsOptions,
) -> Result<Option<Probe>> {
    let (c1, c2) = (opts.c1, opts.c2);
    for _ in 0..opts.max_line_search {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= 1e-16 * b.max(1.0) {
            break;
        }
        let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
        if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
            alpha = 0.5 * (a + b);
        }
        let cur = probe_at(ev, x, d, alpha)?;
        if cur.value > f0 + c1 * alpha * slope0 || cur.value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -c2 * slope0 {
                return Ok(Some(cur));
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // Fall back to the best sufficiently-decreasing point, if any.
    if lo.alpha > 0.0 && lo.value < f0 && !lo.grad.is_empty() {
        return Ok(Some(lo));
    }
    Ok(None)
}

fn cubic_min(p: &Probe, q: &Probe) -> Option<f64> {
    if !p.value.is_finite() || !q.value.is_finite() {
        return None;
    }
    let d1 = p.slope + q.slope - 3.0 * (p.value - q.value) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.slope * q.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    let denom = q.slope - p.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let a = q.alpha - (q.alpha - p.alpha) * (q.slope + d2 - d1) / denom;
    a.is_finite().then_some(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_converges_quickly() {
        let c = [1.0, -2.0, 3.0, 0.5];
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let v = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((v, x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect()))
        };
        let r = lbfgs_minimize(f, &[0.0; 4], &LbfgsOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= c.len() + 5);
        for (a, b) in r.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let opts = LbfgsOptions {
            gtol: 1e-10,
            max_iterations: 2000,
            ..LbfgsOptions::default()
        };
        let r = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn optimal_start_takes_no_steps() {
        let r = lbfgs_minimize(rosenbrock, &[1.0, 1.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.x, vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_wolfe_constants() {
        let opts = LbfgsOptions {
            c1: 0.95,
            ..LbfgsOptions::default()
        };
        assert!(lbfgs_minimize(rosenbrock, &[0.0, 0.0], &opts).is_err());
    }
}
