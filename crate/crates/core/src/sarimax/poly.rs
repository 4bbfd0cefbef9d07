//! Lag polynomials and the stationarity-enforcing reparameterisation.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::tanh;

/// Largest magnitude of an unconstrained parameter before `tanh` saturates
/// to a unit root in double precision.
pub const UNCONSTRAINED_LIMIT: f64 = 12.0;

/// Coefficients `c` of `(1 - sum a_i B^i)(1 - sum b_j B^{s j})`, with `c[0] = 1`.
pub fn seasonal_product(a: &[f64], b: &[f64], s: usize) -> Vec<f64> {
    let mut lhs = vec![0.0; a.len() + 1];
    lhs[0] = 1.0;
    for (i, v) in a.iter().enumerate() {
        lhs[i + 1] = -v;
    }
    let mut rhs = vec![0.0; b.len() * s + 1];
    rhs[0] = 1.0;
    for (j, v) in b.iter().enumerate() {
        rhs[(j + 1) * s] = -v;
    }
    multiply(&lhs, &rhs)
}

pub fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `(1 - B)^d (1 - B^s)^D`.
pub fn differencing(d: usize, sd: usize, s: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..d {
        out = multiply(&out, &[1.0, -1.0]);
    }
    if sd > 0 {
        let mut seasonal = vec![0.0; s + 1];
        seasonal[0] = 1.0;
        seasonal[s] = -1.0;
        for _ in 0..sd {
            out = multiply(&out, &seasonal);
        }
    }
    out
}

/// Maps partial autocorrelations in (-1, 1) to the coefficients of a
/// polynomial `1 - sum c_i B^i` with all roots outside the unit circle.
pub fn from_partial(partial: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = Vec::with_capacity(partial.len());
    for (k, &r) in partial.iter().enumerate() {
        let prev = c.clone();
        for j in 0..k {
            c[j] = prev[j] - r * prev[k - 1 - j];
        }
        c.push(r);
    }
    c
}

/// Inverse of [`from_partial`]; `None` when the polynomial is not stationary.
pub fn to_partial(coef: &[f64]) -> Option<Vec<f64>> {
    let mut c = coef.to_vec();
    let mut partial = vec![0.0; c.len()];
    for k in (0..c.len()).rev() {
        let r = c[k];
        if !(r.abs() < 1.0) {
            return None;
        }
        partial[k] = r;
        let denom = 1.0 - r * r;
        let prev = c.clone();
        for j in 0..k {
            c[j] = (prev[j] + r * prev[k - 1 - j]) / denom;
        }
        c.truncate(k);
    }
    Some(partial)
}

/// Unconstrained values to coefficients; also reports whether any value
/// was clipped at [`UNCONSTRAINED_LIMIT`].
pub fn constrain(x: &[f64]) -> (Vec<f64>, bool) {
    let mut clipped = false;
    let partial: Vec<f64> = x
        .iter()
        .map(|&v| {
            if v.abs() > UNCONSTRAINED_LIMIT {
                clipped = true;
            }
            tanh(v.clamp(-UNCONSTRAINED_LIMIT, UNCONSTRAINED_LIMIT))
        })
        .collect();
    (from_partial(&partial), clipped)
}
