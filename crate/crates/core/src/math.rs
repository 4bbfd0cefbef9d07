//! Scalar math routed through `libm` so results are identical with and
//! without `std` and across platforms.

pub use libm::{cos, exp, fabs as abs, log as ln, pow, round, sin, sqrt, tanh};

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = core::f64::consts::TAU;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}
