//! Checks the Kalman likelihood against a dense Gaussian likelihood built
//! from the process autocovariances, and parameter recovery on simulated data.

use wardcast_core::linalg::Mat;
use wardcast_core::sarimax::{self, difference, ArmaCoefficients, FitOptions, SarimaxOrder};

/// Full lag polynomial `1 + sum c_k B^k` with signs applied, expanded by
/// brute force over the nonseasonal and seasonal factors.
fn expand(nonseasonal: &[f64], seasonal: &[f64], s: usize) -> Vec<f64> {
    let len = nonseasonal.len() + seasonal.len() * s + 1;
    let mut out = vec![0.0; len];
    for i in 0..=nonseasonal.len() {
        let a = if i == 0 { 1.0 } else { -nonseasonal[i - 1] };
        for j in 0..=seasonal.len() {
            let b = if j == 0 { 1.0 } else { -seasonal[j - 1] };
            out[i + j * s] += a * b;
        }
    }
    out
}

/// Autocovariances `gamma(0..n)` of the stationary ARMA part via psi weights.
fn autocovariance(c: &ArmaCoefficients, s: usize, sigma2: f64, n: usize) -> Vec<f64> {
    let ar = expand(&c.ar, &c.seasonal_ar, s);
    let ma = expand(&c.ma, &c.seasonal_ma, s);
    let terms = 20_000;
    let mut psi = vec![0.0; terms];
    for k in 0..terms {
        let mut v = if k < ma.len() { ma[k] } else { 0.0 };
        for i in 1..ar.len().min(k + 1) {
            v -= ar[i] * psi[k - i];
        }
        psi[k] = v;
    }
    (0..n).map(|h| sigma2 * (0..terms - h).map(|j| psi[j] * psi[j + h]).sum::<f64>()).collect()
}

fn dense_loglik(u: &[f64], gamma: &[f64]) -> f64 {
    let n = u.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            l[i * n + j] = gamma[i.abs_diff(j)];
        }
    }
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut v = l[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / d;
        }
    }
    let mut z = u.to_vec();
    for i in 0..n {
        let mut v = z[i];
        for k in 0..i {
            v -= l[i * n + k] * z[k];
        }
        z[i] = v / l[i * n + i];
    }
    let logdet: f64 = (0..n).map(|i| 2.0 * l[i * n + i].ln()).sum();
    let quad: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

#[test]
fn kalman_likelihood_matches_dense_covariance() {
    let cases = [
        (SarimaxOrder::new(1, 0, 1, 0, 0, 0, 7), ArmaCoefficients { ar: vec![0.5], ma: vec![-0.3], ..Default::default() }),
        (
            SarimaxOrder::new(2, 1, 0, 1, 0, 1, 7),
            ArmaCoefficients { ar: vec![0.3, 0.2], seasonal_ar: vec![0.4], seasonal_ma: vec![0.3], ..Default::default() },
        ),
        (SarimaxOrder::WEEKLY_DEFAULT, ArmaCoefficients { ma: vec![0.4, 0.2], seasonal_ma: vec![0.5], ..Default::default() }),
    ];
    for (k, (order, coef)) in cases.iter().enumerate() {
        let n = 160;
        let sigma2 = 1.7;
        let y = sarimax::simulate(*order, coef, sigma2, n, 100, 40 + k as u64).unwrap();
        let kalman = sarimax::log_likelihood(&y, &Mat::zeros(n, 0), *order, coef, &[], sigma2).unwrap();
        let w = difference(&y, order.d, order.seasonal_d, order.s);
        let gamma = autocovariance(coef, order.s, sigma2, w.len());
        let dense = dense_loglik(&w, &gamma);
        assert!((kalman - dense).abs() < 1e-6 * dense.abs(), "case {k}: kalman {kalman} dense {dense}");
    }
}

#[test]
fn likelihood_with_regression_matches_dense() {
    let order = SarimaxOrder::new(1, 0, 0, 0, 0, 0, 0);
    let coef = ArmaCoefficients { ar: vec![0.6], ..Default::default() };
    let n = 120;
    let noise = sarimax::simulate(order, &coef, 1.0, n, 50, 2).unwrap();
    let xs: Vec<f64> = (0..n).map(|t| (t as f64 * 0.3).sin()).collect();
    let beta = [1.5, 4.0];
    let y: Vec<f64> = noise.iter().zip(&xs).map(|(e, x)| e + beta[0] * x + beta[1]).collect();
    let design = Mat::from_vec(n, 2, xs.iter().flat_map(|x| [*x, 1.0]).collect());
    let kalman = sarimax::log_likelihood(&y, &design, order, &coef, &beta, 1.0).unwrap();
    let u: Vec<f64> = y.iter().zip(&xs).map(|(v, x)| v - beta[0] * x - beta[1]).collect();
    let dense = dense_loglik(&u, &autocovariance(&coef, 0, 1.0, n));
    assert!((kalman - dense).abs() < 1e-8 * dense.abs());
}

#[test]
fn recovers_weekly_airline_model() {
    let order = SarimaxOrder::WEEKLY_DEFAULT;
    let truth = ArmaCoefficients { ma: vec![0.4, 0.2], seasonal_ma: vec![0.5], ..Default::default() };
    let n = 1500;
    let y = sarimax::simulate(order, &truth, 1.0, n, 200, 11).unwrap();
    let none = Mat::zeros(n, 0);
    let fit = sarimax::fit(&y, &none, order, &FitOptions::default()).unwrap();
    let c = &fit.coefficients;
    assert!((c.ma[0] - 0.4).abs() <= 0.15, "{c:?}");
    assert!((c.ma[1] - 0.2).abs() <= 0.15, "{c:?}");
    assert!((c.seasonal_ma[0] - 0.5).abs() <= 0.15, "{c:?}");
    let at_truth = sarimax::log_likelihood(&y, &none, order, &truth, &[], fit.sigma2).unwrap();
    assert!(fit.loglik >= at_truth - 1e-6);
    assert!(fit.converged);
}

#[test]
fn difference_examples_and_linearity() {
    assert_eq!(difference(&[1.0, 2.0, 3.0, 4.0], 1, 0, 7), vec![1.0, 1.0, 1.0]);
    let y: Vec<f64> = (1..=9).map(f64::from).collect();
    assert_eq!(difference(&y, 0, 1, 7), vec![7.0, 7.0]);
    assert_eq!(difference(&y, 0, 0, 7), y);
    let z: Vec<f64> = (0..30).map(|t| ((t * 17) % 5) as f64).collect();
    let w: Vec<f64> = (0..30).map(|t| (t as f64).sqrt()).collect();
    let combo: Vec<f64> = z.iter().zip(&w).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
    let lhs = difference(&combo, 1, 1, 7);
    let dz = difference(&z, 1, 1, 7);
    let dw = difference(&w, 1, 1, 7);
    for i in 0..lhs.len() {
        assert!((lhs[i] - (2.0 * dz[i] - 3.0 * dw[i])).abs() < 1e-12);
    }
}

#[test]
fn white_noise_with_constant_column() {
    let order = SarimaxOrder::new(0, 0, 0, 0, 0, 0, 7);
    let n = 500;
    let noise = sarimax::simulate(order, &ArmaCoefficients::default(), 4.0, n, 0, 3).unwrap();
    let y: Vec<f64> = noise.iter().map(|v| v + 20.0).collect();
    let ones = Mat::from_vec(n, 1, vec![1.0; n]);
    let fit = sarimax::fit(&y, &ones, order, &FitOptions::default()).unwrap();
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    assert!(!fit.intercept);
    assert!((fit.beta[0] - mean).abs() < 1e-9);
    assert!((fit.sigma2 - var).abs() < 1e-9);
    // aic = 2k - 2 loglik with k = 0 ARMA + 1 beta + 1 variance
    assert!((fit.aic - (4.0 - 2.0 * fit.loglik)).abs() < 1e-9);
}

#[test]
fn perfect_regression() {
    let order = SarimaxOrder::new(0, 0, 0, 0, 0, 0, 7);
    let xs: Vec<f64> = (0..50).map(|t| ((t * 7) % 13) as f64 + 1.0).collect();
    let y: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
    let x = Mat::from_vec(50, 1, xs);
    let fit = sarimax::fit(&y, &x, order, &FitOptions { include_mean: false, ..FitOptions::default() }).unwrap();
    assert!((fit.beta[0] - 2.0).abs() < 1e-9);
    assert!(fit.sigma2 < 1e-20);
}

#[test]
fn constant_model_forecast() {
    let order = SarimaxOrder::new(0, 0, 0, 0, 0, 0, 7);
    let y = vec![5.0; 40];
    let ones = Mat::from_vec(40, 1, vec![1.0; 40]);
    let fit = sarimax::fit(&y, &ones, order, &FitOptions::default()).unwrap();
    let fc = fit.forecast(&y, &ones, &Mat::from_vec(7, 1, vec![1.0; 7])).unwrap();
    for v in fc {
        assert!((v - 5.0).abs() < 1e-9);
    }
    assert!(fit.forecast(&y, &ones, &Mat::from_vec(7, 2, vec![1.0; 14])).is_err());
}

#[test]
fn selection_keeps_stationary_ar() {
    use wardcast_core::sarimax::OrderSpace;
    let order = SarimaxOrder::new(1, 0, 0, 0, 0, 0, 7);
    let n = 2000;
    let y = sarimax::simulate(order, &ArmaCoefficients { ar: vec![0.8], ..Default::default() }, 1.0, n, 200, 17).unwrap();
    let space = OrderSpace {
        p: vec![0, 1, 2],
        d: vec![0, 1],
        q: vec![0, 1],
        seasonal_p: vec![0, 1],
        seasonal_d: vec![0, 1],
        seasonal_q: vec![0, 1],
        s: 7,
    };
    let sel = sarimax::select_order(&y, &Mat::zeros(n, 0), &space, &FitOptions::default()).unwrap();
    assert!(sel.best.p >= 1, "{}", sel.best);
    assert_eq!(sel.best.seasonal_d, 0, "{}", sel.best);
    let one = OrderSpace { p: vec![0], d: vec![1], q: vec![1], seasonal_p: vec![0], seasonal_d: vec![0], seasonal_q: vec![0], s: 7 };
    let sel = sarimax::select_order(&y, &Mat::zeros(n, 0), &one, &FitOptions::default()).unwrap();
    assert_eq!(sel.best, SarimaxOrder::new(0, 1, 1, 0, 0, 0, 7));
}
