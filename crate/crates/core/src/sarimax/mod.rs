//! Seasonal ARIMA with exogenous regressors.
//!
//! The model for a series `y` with regressors `X` is
//!
//! ```text
//! phi(B) Phi(B^s) (1 - B)^d (1 - B^s)^D (y_t - x_t' beta) = theta(B) Theta(B^s) e_t
//! ```
//!
//! with every lag polynomial written as `1 - sum c_i B^i`. Regression effects
//! are differenced along with the series. Parameters are estimated by exact
//! Gaussian maximum likelihood: the differenced regression errors are run
//! through a Kalman filter started from the stationary distribution, and
//! `beta` and the innovation variance are concentrated out in closed form, so
//! the optimiser only searches over the ARMA coefficients. Those are kept
//! stationary and invertible by optimising `atanh` of their partial
//! autocorrelations.

mod poly;
mod statespace;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, Mat};
use crate::math::{ln, sqrt, PI};
use crate::optim::{minimize, BfgsOptions};
use crate::rng;

pub use poly::{differencing, from_partial, to_partial};
use statespace::StateSpace;

/// Orders `(p, d, q)(P, D, Q)_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SarimaxOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub seasonal_p: usize,
    pub seasonal_d: usize,
    pub seasonal_q: usize,
    pub s: usize,
}

impl SarimaxOrder {
    pub const fn new(p: usize, d: usize, q: usize, seasonal_p: usize, seasonal_d: usize, seasonal_q: usize, s: usize) -> Self {
        Self { p, d, q, seasonal_p, seasonal_d, seasonal_q, s }
    }

    /// `(0,1,2)(0,1,1)_7`, the order used for the admission series.
    pub const WEEKLY_DEFAULT: SarimaxOrder = SarimaxOrder::new(0, 1, 2, 0, 1, 1, 7);

    /// Number of observations consumed by differencing.
    pub fn diff_len(&self) -> usize {
        self.d + self.seasonal_d * self.s
    }

    pub fn n_arma(&self) -> usize {
        self.p + self.q + self.seasonal_p + self.seasonal_q
    }

    fn is_seasonal(&self) -> bool {
        self.seasonal_p + self.seasonal_d + self.seasonal_q > 0
    }

    /// Checks the order against a series of length `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.is_seasonal() && self.s < 2 {
            return Err(Error::config(format!("seasonal period must be at least 2 for order {self}")));
        }
        let s = if self.is_seasonal() { self.s } else { 0 };
        let need = self.d + self.seasonal_d * s + self.p.max(self.q) + s * self.seasonal_p.max(self.seasonal_q);
        if need >= n {
            return Err(Error::insufficient(format!("order {self} needs more than {need} observations, got {n}")));
        }
        Ok(())
    }
}

impl fmt::Display for SarimaxOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})({},{},{})_{}", self.p, self.d, self.q, self.seasonal_p, self.seasonal_d, self.seasonal_q, self.s)
    }
}

/// ARMA coefficients in the `1 - sum c_i B^i` convention for all four
/// polynomials.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmaCoefficients {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub seasonal_ar: Vec<f64>,
    pub seasonal_ma: Vec<f64>,
}

impl ArmaCoefficients {
    fn check(&self, order: &SarimaxOrder) -> Result<()> {
        let lens = [
            (self.ar.len(), order.p),
            (self.ma.len(), order.q),
            (self.seasonal_ar.len(), order.seasonal_p),
            (self.seasonal_ma.len(), order.seasonal_q),
        ];
        for (got, expected) in lens {
            if got != expected {
                return Err(Error::Dimension { expected, got });
            }
        }
        Ok(())
    }

    /// Coefficients `a_i` in `u_t = sum a_i u_{t-i} + ...`.
    fn ar_lags(&self, s: usize) -> Vec<f64> {
        poly::seasonal_product(&self.ar, &self.seasonal_ar, s)[1..].iter().map(|c| -c).collect()
    }

    /// Coefficients `m_j` in `u_t = ... + e_t + sum m_j e_{t-j}`.
    fn ma_lags(&self, s: usize) -> Vec<f64> {
        poly::seasonal_product(&self.ma, &self.seasonal_ma, s)[1..].to_vec()
    }

    fn state_space(&self, s: usize) -> StateSpace {
        StateSpace::new(&self.ar_lags(s), &self.ma_lags(s))
    }

    fn from_unconstrained(x: &[f64], order: &SarimaxOrder) -> (Self, bool) {
        let mut at = 0;
        let mut clipped = false;
        let mut take = |k: usize| {
            let (c, hit) = poly::constrain(&x[at..at + k]);
            at += k;
            clipped |= hit;
            c
        };
        let ar = take(order.p);
        let ma = take(order.q);
        let seasonal_ar = take(order.seasonal_p);
        let seasonal_ma = take(order.seasonal_q);
        (Self { ar, ma, seasonal_ar, seasonal_ma }, clipped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Optimiser starts; the first is at zero, the rest are seeded draws.
    pub restarts: usize,
    pub seed: u64,
    /// Add a constant regressor when the model has no differencing and `x`
    /// has no constant column of its own.
    pub include_mean: bool,
    pub bfgs: BfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 5, seed: 0, include_mean: true, bfgs: BfgsOptions::default() }
    }
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaxFit {
    pub order: SarimaxOrder,
    pub coefficients: ArmaCoefficients,
    /// One entry per design column: the caller's regressors, then the
    /// constant when `intercept` is set.
    pub beta: Vec<f64>,
    pub exog_names: Vec<String>,
    pub intercept: bool,
    /// Design columns that vanish after differencing; their `beta` is zero
    /// and they are not counted as parameters.
    pub dropped_exog: Vec<usize>,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    /// Observations left after differencing.
    pub n_obs: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub iterations: usize,
    pub best_restart: usize,
    pub warnings: Vec<String>,
}

/// How forecasts inside the horizon are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecastMode {
    /// Genuine multi-step forecasts from information up to the origin.
    #[default]
    MultiStep,
    /// One-step-ahead forecasts, each conditioned on all observations
    /// before the forecast day, including those inside the horizon.
    RollingOneStep,
}

/// Applies `(1 - B)^d (1 - B^s)^D` to a series.
pub fn difference(y: &[f64], d: usize, seasonal_d: usize, s: usize) -> Vec<f64> {
    let delta = poly::differencing(d, seasonal_d, s);
    let nd = delta.len() - 1;
    if y.len() <= nd {
        return Vec::new();
    }
    (nd..y.len()).map(|t| delta.iter().enumerate().map(|(j, c)| c * y[t - j]).sum()).collect()
}

fn difference_columns(x: &Mat, delta: &[f64]) -> Mat {
    let nd = delta.len() - 1;
    let rows = x.rows.saturating_sub(nd);
    let mut out = Mat::zeros(rows, x.cols);
    for t in 0..rows {
        for (j, c) in delta.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let src = x.row(t + nd - j);
            for (o, v) in out.row_mut(t).iter_mut().zip(src) {
                *o += c * v;
            }
        }
    }
    out
}

fn with_intercept(x: &Mat, intercept: bool) -> Mat {
    if !intercept {
        return x.clone();
    }
    let mut out = Mat::zeros(x.rows, x.cols + 1);
    for t in 0..x.rows {
        out.row_mut(t)[..x.cols].copy_from_slice(x.row(t));
        out.row_mut(t)[x.cols] = 1.0;
    }
    out
}

struct Concentrated {
    beta: Vec<f64>,
    sigma2: f64,
    loglik: f64,
}

/// Profile likelihood: `data` is row-major `n x (1 + k)` holding the
/// differenced series and the active differenced regressors.
fn concentrated(ss: &StateSpace, data: &[f64], k: usize) -> Option<Concentrated> {
    let ncol = k + 1;
    let n = data.len() / ncol;
    let out = ss.filter(data, ncol, None)?;
    let z = &out.scaled;
    let beta = if k == 0 {
        Vec::new()
    } else {
        let mut gram = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for t in 0..n {
            let row = &z[t * ncol..(t + 1) * ncol];
            for i in 0..k {
                rhs[i] += row[1 + i] * row[0];
                for j in i..k {
                    gram[i * k + j] += row[1 + i] * row[1 + j];
                }
            }
        }
        let trace: f64 = (0..k).map(|i| gram[i * k + i]).sum();
        for i in 0..k {
            gram[i * k + i] += 1e-12 * trace.max(1e-300) / k as f64;
            for j in 0..i {
                gram[i * k + j] = gram[j * k + i];
            }
        }
        cholesky(&mut gram, k).ok()?;
        cholesky_solve(&gram, k, &mut rhs);
        rhs
    };
    let mut ssr = 0.0;
    for t in 0..n {
        let row = &z[t * ncol..(t + 1) * ncol];
        let mut e = row[0];
        for i in 0..k {
            e -= beta[i] * row[1 + i];
        }
        ssr += e * e;
    }
    let nf = n as f64;
    let sigma2 = (ssr / nf).max(1e-300);
    let loglik = -0.5 * nf * (ln(2.0 * PI) + ln(sigma2) + 1.0) - 0.5 * out.sum_log_f;
    loglik.is_finite().then_some(Concentrated { beta, sigma2, loglik })
}

fn check_inputs(y: &[f64], x: &Mat) -> Result<()> {
    if x.rows != y.len() {
        return Err(Error::Dimension { expected: y.len(), got: x.rows });
    }
    if let Some(t) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("series value at index {t}")));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regressor matrix".into()));
    }
    Ok(())
}

/// Fits `order` to `y` with regressors `x` (`y.len()` rows; zero columns for
/// none). Fails with [`Error::NoConvergence`] when no start converges.
pub fn fit(y: &[f64], x: &Mat, order: SarimaxOrder, opts: &FitOptions) -> Result<SarimaxFit> {
    check_inputs(y, x)?;
    order.validate(y.len())?;
    let has_constant = (0..x.cols).any(|c| {
        let first = if x.rows > 0 { x.at(0, c) } else { 0.0 };
        first != 0.0 && (0..x.rows).all(|t| x.at(t, c) == first)
    });
    let intercept = opts.include_mean && order.diff_len() == 0 && !has_constant;
    let design = with_intercept(x, intercept);
    let delta = poly::differencing(order.d, order.seasonal_d, order.s);
    let w = difference(y, order.d, order.seasonal_d, order.s);
    let xd = difference_columns(&design, &delta);
    let n = w.len();

    let mut active = Vec::new();
    let mut dropped_exog = Vec::new();
    for c in 0..design.cols {
        let raw = (0..design.rows).fold(0.0f64, |m, t| m.max(design.at(t, c).abs()));
        let diffed = (0..xd.rows).fold(0.0f64, |m, t| m.max(xd.at(t, c).abs()));
        if diffed <= 1e-9 * raw.max(1.0) {
            dropped_exog.push(c);
        } else {
            active.push(c);
        }
    }
    let k = active.len();
    let n_params = order.n_arma() + k + 1;
    if n <= n_params {
        return Err(Error::insufficient(format!("order {order} with {k} regressors leaves {n} observations for {n_params} parameters")));
    }
    let ncol = k + 1;
    let mut data = vec![0.0; n * ncol];
    for t in 0..n {
        data[t * ncol] = w[t];
        for (i, &c) in active.iter().enumerate() {
            data[t * ncol + 1 + i] = xd.at(t, c);
        }
    }

    let objective = |theta: &[f64]| {
        let (coef, _) = ArmaCoefficients::from_unconstrained(theta, &order);
        match concentrated(&coef.state_space(order.s), &data, k) {
            Some(c) => -c.loglik / n as f64,
            None => f64::INFINITY,
        }
    };

    let dim = order.n_arma();
    let restarts = opts.restarts.max(1);
    let mut best: Option<(usize, crate::optim::Minimum)> = None;
    let mut best_any: Option<crate::optim::Minimum> = None;
    for r in 0..restarts {
        let x0: Vec<f64> = if r == 0 {
            vec![0.0; dim]
        } else {
            let mut g = rng::stream(opts.seed, r as u64);
            (0..dim).map(|_| g.random_range(-1.0..1.0)).collect()
        };
        let m = minimize(objective, &x0, &opts.bfgs);
        if !m.f.is_finite() {
            continue;
        }
        if best_any.as_ref().map_or(true, |b| m.f < b.f) {
            best_any = Some(m.clone());
        }
        if m.converged && best.as_ref().map_or(true, |(_, b)| m.f < b.f) {
            best = Some((r, m));
        }
        if dim == 0 {
            break;
        }
    }
    let Some((best_restart, m)) = best else {
        let (best_loglik, grad_norm) = best_any.map_or((f64::NEG_INFINITY, f64::INFINITY), |b| (-b.f * n as f64, b.grad_norm));
        return Err(Error::NoConvergence { restarts, best_loglik, grad_norm });
    };
    let (coefficients, clipped) = ArmaCoefficients::from_unconstrained(&m.x, &order);
    let conc = concentrated(&coefficients.state_space(order.s), &data, k)
        .ok_or_else(|| Error::model(format!("likelihood undefined at the optimum of {order}")))?;
    let mut beta = vec![0.0; design.cols];
    for (i, &c) in active.iter().enumerate() {
        beta[c] = conc.beta[i];
    }
    let mut warnings = Vec::new();
    if clipped {
        warnings.push(String::from("coefficients projected to the stationary/invertible boundary"));
    }
    let mut exog_names: Vec<String> = (0..x.cols).map(|i| format!("x{i}")).collect();
    if intercept {
        exog_names.push("const".into());
    }
    Ok(SarimaxFit {
        order,
        coefficients,
        beta,
        exog_names,
        intercept,
        dropped_exog,
        sigma2: conc.sigma2,
        loglik: conc.loglik,
        aic: 2.0 * n_params as f64 - 2.0 * conc.loglik,
        n_obs: n,
        converged: true,
        grad_norm: m.grad_norm,
        iterations: m.iterations,
        best_restart,
        warnings,
    })
}

/// Exact Gaussian log-likelihood of `y` under fixed parameters. `x` is the
/// full design (include a constant column yourself if wanted).
pub fn log_likelihood(y: &[f64], x: &Mat, order: SarimaxOrder, coefficients: &ArmaCoefficients, beta: &[f64], sigma2: f64) -> Result<f64> {
    check_inputs(y, x)?;
    coefficients.check(&order)?;
    if beta.len() != x.cols {
        return Err(Error::Dimension { expected: x.cols, got: beta.len() });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::config("innovation variance must be positive"));
    }
    let delta = poly::differencing(order.d, order.seasonal_d, order.s);
    let w = difference(y, order.d, order.seasonal_d, order.s);
    let xd = difference_columns(x, &delta);
    let u: Vec<f64> = (0..w.len()).map(|t| w[t] - xd.row(t).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()).collect();
    let out = coefficients.state_space(order.s).filter(&u, 1, None).ok_or_else(|| Error::model("parameters are not stationary"))?;
    let n = u.len() as f64;
    let ssr: f64 = out.scaled.iter().map(|v| v * v).sum();
    Ok(-0.5 * n * ln(2.0 * PI * sigma2) - 0.5 * out.sum_log_f - 0.5 * ssr / sigma2)
}

impl SarimaxFit {
    fn design(&self, x: &Mat) -> Result<Mat> {
        let expected = self.beta.len() - usize::from(self.intercept);
        if x.cols != expected {
            return Err(Error::Dimension { expected, got: x.cols });
        }
        Ok(with_intercept(x, self.intercept))
    }

    /// Log-likelihood of new data at the fitted parameters.
    pub fn log_likelihood(&self, y: &[f64], x: &Mat) -> Result<f64> {
        let design = self.design(x)?;
        log_likelihood(y, &design, self.order, &self.coefficients, &self.beta, self.sigma2)
    }

    /// Forecasts the `x_future.rows` days following `y_history`.
    pub fn forecast(&self, y_history: &[f64], x_history: &Mat, x_future: &Mat) -> Result<Vec<f64>> {
        if x_history.rows != y_history.len() {
            return Err(Error::Dimension { expected: y_history.len(), got: x_history.rows });
        }
        if x_future.cols != x_history.cols {
            return Err(Error::Dimension { expected: x_history.cols, got: x_future.cols });
        }
        if y_history.is_empty() {
            return Err(Error::insufficient("empty history"));
        }
        let mut x = x_history.clone();
        x.rows += x_future.rows;
        x.data.extend_from_slice(&x_future.data);
        let mut out = self.forecast_origins(y_history, &x, &[y_history.len() - 1], x_future.rows, ForecastMode::MultiStep)?;
        Ok(out.pop().unwrap_or_default())
    }

    /// Forecasts `horizon` days after each origin (index of the last
    /// observed day) with a single filter pass over `y`. `x` must cover every
    /// forecast day. Multi-step forecasts use `y` only up to the origin.
    pub fn forecast_origins(&self, y: &[f64], x: &Mat, origins: &[usize], horizon: usize, mode: ForecastMode) -> Result<Vec<Vec<f64>>> {
        let design = self.design(x)?;
        if y.len() > design.rows {
            return Err(Error::Dimension { expected: y.len(), got: design.rows });
        }
        if let Some(t) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("series value at index {t}")));
        }
        let order = self.order;
        let delta = poly::differencing(order.d, order.seasonal_d, order.s);
        let nd = delta.len() - 1;
        let xd = difference_columns(&design, &delta);
        let w = difference(y, order.d, order.seasonal_d, order.s);
        let reg = |t: usize| -> f64 { xd.row(t).iter().zip(&self.beta).map(|(a, b)| a * b).sum() };
        let u: Vec<f64> = (0..w.len()).map(|t| w[t] - reg(t)).collect();
        let ss = self.coefficients.state_space(order.s);
        let r = ss.r;
        let mut states = Vec::new();
        ss.filter(&u, 1, Some(&mut states)).ok_or_else(|| Error::model("fitted parameters are not stationary"))?;

        let mut out = Vec::with_capacity(origins.len());
        for &o in origins {
            if o + 1 < nd || o >= y.len() {
                return Err(Error::insufficient(format!("origin {o} needs between {nd} and {} observed days", y.len())));
            }
            if o + horizon >= design.rows {
                return Err(Error::insufficient(format!("regressors end before day {}", o + horizon)));
            }
            let mut path = Vec::with_capacity(horizon);
            match mode {
                ForecastMode::MultiStep => {
                    // Predicted state for day o + 1 in differenced time.
                    let i = o + 1 - nd;
                    let mut a = states[i * r..(i + 1) * r].to_vec();
                    let mut next = vec![0.0; r];
                    let mut hist: Vec<f64> = y[o + 1 - nd..=o].to_vec();
                    for h in 1..=horizon {
                        let t = o + h;
                        let what = a[0] + reg(t - nd);
                        let yhat = what - (1..=nd).map(|j| delta[j] * hist[hist.len() - j]).sum::<f64>();
                        hist.push(yhat);
                        path.push(yhat);
                        ss.transition(&a, &mut next);
                        core::mem::swap(&mut a, &mut next);
                    }
                }
                ForecastMode::RollingOneStep => {
                    for h in 1..=horizon {
                        let t = o + h;
                        if t > y.len() {
                            return Err(Error::insufficient(format!(
                                "one-step forecast for day {t} needs observations through day {}",
                                t - 1
                            )));
                        }
                        let i = t - nd;
                        let what = states[i * r] + reg(i);
                        path.push(what - (1..=nd).map(|j| delta[j] * y[t - j]).sum::<f64>());
                    }
                }
            }
            out.push(path);
        }
        Ok(out)
    }

    /// Number of estimated parameters counted by the AIC.
    pub fn n_params(&self) -> usize {
        self.order.n_arma() + self.beta.len() - self.dropped_exog.len() + 1
    }
}

/// Simulates `n` observations of a seasonal ARIMA process without
/// regressors, starting the integration from zeros after `burn_in` draws of
/// the stationary part.
pub fn simulate(
    order: SarimaxOrder,
    coefficients: &ArmaCoefficients,
    sigma2: f64,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    coefficients.check(&order)?;
    if !(sigma2 > 0.0) {
        return Err(Error::config("innovation variance must be positive"));
    }
    let ar = coefficients.ar_lags(order.s);
    let ma = coefficients.ma_lags(order.s);
    let sd = sqrt(sigma2);
    let mut g = rng::stream(seed, 0);
    let total = n + burn_in;
    let mut e = Vec::with_capacity(total);
    let mut u: Vec<f64> = Vec::with_capacity(total);
    for t in 0..total {
        let z: f64 = StandardNormal.sample(&mut g);
        e.push(sd * z);
        let mut v = e[t];
        for (i, a) in ar.iter().enumerate() {
            if t > i {
                v += a * u[t - 1 - i];
            }
        }
        for (j, m) in ma.iter().enumerate() {
            if t > j {
                v += m * e[t - 1 - j];
            }
        }
        u.push(v);
    }
    let delta = poly::differencing(order.d, order.seasonal_d, order.s);
    let mut y: Vec<f64> = Vec::with_capacity(n);
    for t in 0..n {
        let mut v = u[burn_in + t];
        for j in 1..delta.len() {
            if t >= j {
                v -= delta[j] * y[t - j];
            }
        }
        y.push(v);
    }
    Ok(y)
}

/// Candidate orders for [`select_order`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderSpace {
    pub p: Vec<usize>,
    pub d: Vec<usize>,
    pub q: Vec<usize>,
    pub seasonal_p: Vec<usize>,
    pub seasonal_d: Vec<usize>,
    pub seasonal_q: Vec<usize>,
    pub s: usize,
}

impl Default for OrderSpace {
    fn default() -> Self {
        Self {
            p: vec![0, 1, 2],
            d: vec![0, 1],
            q: vec![0, 1, 2],
            seasonal_p: vec![0, 1, 2],
            seasonal_d: vec![0, 1],
            seasonal_q: vec![0, 1, 2],
            s: 7,
        }
    }
}

impl OrderSpace {
    pub fn candidates(&self) -> Vec<SarimaxOrder> {
        let mut out = Vec::new();
        for &p in &self.p {
            for &d in &self.d {
                for &q in &self.q {
                    for &sp in &self.seasonal_p {
                        for &sd in &self.seasonal_d {
                            for &sq in &self.seasonal_q {
                                out.push(SarimaxOrder::new(p, d, q, sp, sd, sq, self.s));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub order: SarimaxOrder,
    pub aic: Option<f64>,
    pub loglik: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub best: SarimaxOrder,
    pub fit: SarimaxFit,
    /// Every candidate in grid order.
    pub candidates: Vec<CandidateOutcome>,
}

/// `true` when `a` should be preferred to `b`: lower AIC, then fewer
/// parameters, then the lexicographically smaller order.
fn prefer(a: &SarimaxFit, b: &SarimaxFit) -> bool {
    let tol = 1e-9 * a.aic.abs().max(b.aic.abs()).max(1.0);
    if (a.aic - b.aic).abs() > tol {
        return a.aic < b.aic;
    }
    (a.n_params(), a.order) < (b.n_params(), b.order)
}

/// Fits every order in `space` and keeps the converged fit with the lowest
/// AIC.
pub fn select_order(y: &[f64], x: &Mat, space: &OrderSpace, opts: &FitOptions) -> Result<OrderSelection> {
    check_inputs(y, x)?;
    let orders = space.candidates();
    if orders.is_empty() {
        return Err(Error::config("empty order search space"));
    }
    let run = |order: &SarimaxOrder| fit(y, x, *order, opts);
    #[cfg(feature = "parallel")]
    let fits: Vec<Result<SarimaxFit>> = {
        use rayon::prelude::*;
        orders.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fits: Vec<Result<SarimaxFit>> = orders.iter().map(run).collect();

    let mut best: Option<SarimaxFit> = None;
    let mut candidates = Vec::with_capacity(orders.len());
    for (order, result) in orders.iter().zip(fits) {
        match result {
            Ok(f) => {
                candidates.push(CandidateOutcome { order: *order, aic: Some(f.aic), loglik: Some(f.loglik), error: None });
                if best.as_ref().map_or(true, |b| prefer(&f, b)) {
                    best = Some(f);
                }
            }
            Err(e) => candidates.push(CandidateOutcome { order: *order, aic: None, loglik: None, error: Some(format!("{e}")) }),
        }
    }
    let fit = best.ok_or_else(|| Error::model("no candidate order could be fitted"))?;
    Ok(OrderSelection { best: fit.order, fit, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none(n: usize) -> Mat {
        Mat::zeros(n, 0)
    }

    #[test]
    fn difference_matches_manual() {
        let y: Vec<f64> = (0..20).map(|t| (t * t) as f64).collect();
        let w = difference(&y, 1, 1, 7);
        assert_eq!(w.len(), 12);
        for (i, v) in w.iter().enumerate() {
            let t = i + 8;
            let manual = y[t] - y[t - 1] - y[t - 7] + y[t - 8];
            assert!((v - manual).abs() < 1e-9);
        }
    }

    #[test]
    fn order_validation() {
        assert!(SarimaxOrder::WEEKLY_DEFAULT.validate(10).is_err());
        assert!(SarimaxOrder::WEEKLY_DEFAULT.validate(30).is_ok());
        assert!(SarimaxOrder::new(0, 0, 0, 1, 0, 0, 1).validate(100).is_err());
        assert_eq!(OrderSpace::default().candidates().len(), 324);
        assert_eq!(SarimaxOrder::WEEKLY_DEFAULT.to_string(), "(0,1,2)(0,1,1)_7");
    }

    #[test]
    fn recovers_ar1_with_mean() {
        let order = SarimaxOrder::new(1, 0, 0, 0, 0, 0, 0);
        let coef = ArmaCoefficients { ar: vec![0.6], ..Default::default() };
        let y: Vec<f64> = simulate(order, &coef, 1.0, 2000, 200, 3).unwrap().iter().map(|v| v + 10.0).collect();
        let f = fit(&y, &none(y.len()), order, &FitOptions::default()).unwrap();
        assert!((f.coefficients.ar[0] - 0.6).abs() < 0.05, "{:?}", f.coefficients);
        assert!((f.beta[0] - 10.0).abs() < 0.3);
        assert!((f.sigma2 - 1.0).abs() < 0.1);
        assert!(f.intercept);
    }

    #[test]
    fn regression_coefficient_recovered() {
        let order = SarimaxOrder::new(0, 1, 1, 0, 0, 0, 0);
        let coef = ArmaCoefficients { ma: vec![0.5], ..Default::default() };
        let noise = simulate(order, &coef, 1.0, 800, 50, 9).unwrap();
        let xcol: Vec<f64> = (0..800).map(|t| ((t * 37) % 11) as f64).collect();
        let y: Vec<f64> = noise.iter().zip(&xcol).map(|(e, x)| e + 2.5 * x).collect();
        let x = Mat::from_vec(800, 1, xcol);
        let f = fit(&y, &x, order, &FitOptions::default()).unwrap();
        assert!((f.beta[0] - 2.5).abs() < 0.05, "{:?}", f.beta);
        assert!((f.coefficients.ma[0] - 0.5).abs() < 0.08);
        assert!(!f.intercept);
    }

    #[test]
    fn vanishing_regressors_dropped() {
        let n = 200;
        let order = SarimaxOrder::new(0, 0, 1, 0, 1, 0, 7);
        let y = simulate(order, &ArmaCoefficients { ma: vec![0.3], ..Default::default() }, 1.0, n, 20, 4).unwrap();
        let weekly: Vec<f64> = (0..n).map(|t| ((t % 7) as f64).sin()).collect();
        let x = Mat::from_vec(n, 1, weekly);
        let f = fit(&y, &x, order, &FitOptions::default()).unwrap();
        assert_eq!(f.dropped_exog, vec![0]);
        assert_eq!(f.beta, vec![0.0]);
        assert_eq!(f.n_params(), 2);
    }

    #[test]
    fn ma2_forecast_reverts_to_regression() {
        let n = 300;
        let order = SarimaxOrder::new(0, 0, 2, 0, 0, 0, 0);
        let coef = ArmaCoefficients { ma: vec![0.4, 0.2], ..Default::default() };
        let y = simulate(order, &coef, 1.0, n, 20, 5).unwrap();
        let f = fit(&y, &none(n), order, &FitOptions::default()).unwrap();
        let fc = f.forecast(&y, &none(n), &none(7)).unwrap();
        for v in &fc[2..] {
            assert!((v - f.beta[0]).abs() < 1e-12);
        }
        assert!((fc[0] - f.beta[0]).abs() > 1e-6);
    }

    #[test]
    fn random_walk_forecast_is_flat() {
        let order = SarimaxOrder::new(0, 1, 0, 0, 0, 0, 0);
        let y: Vec<f64> = (0..50).map(|t| ((t * 13) % 7) as f64).collect();
        let f = fit(&y, &none(50), order, &FitOptions::default()).unwrap();
        let fc = f.forecast(&y, &none(50), &none(7)).unwrap();
        assert!(fc.iter().all(|v| (v - y[49]).abs() < 1e-12));
    }

    #[test]
    fn origins_agree_with_truncated_history() {
        let order = SarimaxOrder::WEEKLY_DEFAULT;
        let coef = ArmaCoefficients { ma: vec![0.4, 0.2], seasonal_ma: vec![0.5], ..Default::default() };
        let y = simulate(order, &coef, 1.0, 200, 50, 6).unwrap();
        let f = fit(&y, &none(200), order, &FitOptions::default()).unwrap();
        let all = f.forecast_origins(&y, &none(200), &[120, 150], 7, ForecastMode::MultiStep).unwrap();
        let direct = f.forecast(&y[..151], &none(151), &none(7)).unwrap();
        for (a, b) in all[1].iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9);
        }
        let one = f.forecast_origins(&y, &none(200), &[150], 7, ForecastMode::RollingOneStep).unwrap();
        assert!((one[0][0] - direct[0]).abs() < 1e-9);
    }

    #[test]
    fn selection_prefers_true_structure() {
        let order = SarimaxOrder::new(1, 0, 0, 0, 0, 0, 7);
        let y = simulate(order, &ArmaCoefficients { ar: vec![0.7], ..Default::default() }, 1.0, 400, 100, 8).unwrap();
        let space =
            OrderSpace { p: vec![0, 1], d: vec![0], q: vec![0, 1], seasonal_p: vec![0], seasonal_d: vec![0], seasonal_q: vec![0], s: 7 };
        let sel = select_order(&y, &none(400), &space, &FitOptions::default()).unwrap();
        assert_eq!(sel.candidates.len(), 4);
        assert!(sel.best.p == 1 || sel.best.q == 1);
        assert_ne!(sel.best, SarimaxOrder::new(0, 0, 0, 0, 0, 0, 7));
    }
}
