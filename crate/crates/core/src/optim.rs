//! Quasi-Newton minimisation with finite-difference gradients.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{abs, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when the Euclidean gradient norm drops below this.
    pub gtol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Largest accepted gradient norm when progress stalls at numerical
    /// precision (the finite-difference noise floor).
    pub stall_gtol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, gtol: 1e-8, fd_step: 1e-5, stall_gtol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&mut self, x: &[f64], step: f64) -> Vec<f64> {
        let mut xp = x.to_vec();
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = step * abs(x[i]).max(1.0);
            let xi = x[i];
            xp[i] = xi + h;
            let fp = self.eval(&xp);
            xp[i] = xi - h;
            let fm = self.eval(&xp);
            xp[i] = xi;
            g[i] = (fp - fm) / (2.0 * h);
            if !g[i].is_finite() {
                g[i] = 0.0;
            }
        }
        g
    }
}

/// Minimises `f` from `x0` with BFGS and a backtracking Armijo line search.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut obj = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    let mut fx = obj.eval(&x);
    if n == 0 {
        return Minimum { x, f: fx, grad_norm: 0.0, iterations: 0, evaluations: obj.evals, converged: fx.is_finite() };
    }
    let mut g = obj.gradient(&x, opts.fd_step);
    let mut h = identity(n);
    let mut iterations = 0;
    let mut converged = false;
    let mut reset_once = false;
    while iterations < opts.max_iter {
        let gn = norm(&g);
        if gn <= opts.gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !(slope < 0.0) {
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        // Keep the first trial step bounded in the unconstrained space.
        let dn = norm(&dir);
        let mut alpha = if dn > 5.0 { 5.0 / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..30 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let fnew = obj.eval(&xn);
            if fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if gn <= opts.stall_gtol {
                converged = true;
                break;
            }
            if reset_once {
                break;
            }
            reset_once = true;
            h = identity(n);
            continue;
        };
        let gnew = obj.gradient(&xn, opts.fd_step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let stalled = abs(fx - fnew) <= 1e-15 * fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gnew;
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            if iterations == 1 || reset_once {
                let yy: f64 = yv.iter().map(|v| v * v).sum();
                let scale = sy / yy;
                h = identity(n);
                h.iter_mut().for_each(|v| *v *= scale);
                reset_once = false;
            }
            bfgs_update(&mut h, &s, &yv, sy);
        }
        if stalled && norm(&g) <= opts.stall_gtol {
            converged = true;
            break;
        }
    }
    let grad_norm = norm(&g);
    if grad_norm <= opts.gtol {
        converged = true;
    }
    Minimum { x, f: fx, grad_norm, iterations, evaluations: obj.evals, converged }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// Inverse-Hessian BFGS update.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = minimize(f, &[-1.2, 1.0], &BfgsOptions { max_iter: 500, ..BfgsOptions::default() });
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_to_tight_gradient() {
        let f = |x: &[f64]| 0.5 * (3.0 * (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2)) + 0.1 * x[0] * x[1];
        let m = minimize(f, &[0.0, 0.0], &BfgsOptions::default());
        assert!(m.converged);
        assert!(m.grad_norm <= 1e-5);
    }

    #[test]
    fn empty_problem() {
        let m = minimize(|_| 3.0, &[], &BfgsOptions::default());
        assert!(m.converged);
        assert_eq!(m.f, 3.0);
    }
}
