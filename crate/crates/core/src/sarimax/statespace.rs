//! Kalman filter for a zero-mean ARMA process in companion form.
//!
//! The state is `r = max(p, q + 1)` dimensional with transition `T` holding
//! the AR lag coefficients in its first column and ones on the
//! superdiagonal, and disturbance loading `R = (1, m_1, ..., m_{r-1})` for the
//! MA coefficients in innovation form. The observation is the first state
//! element with no measurement noise. Covariances are kept normalised by the
//! innovation variance so it can be concentrated out of the likelihood.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::ln;

#[derive(Debug, Clone)]
pub struct StateSpace {
    pub r: usize,
    /// Number of AR lags (nonzero prefix of `phi`).
    pub p: usize,
    /// First column of `T`, zero padded to `r`.
    pub phi: Vec<f64>,
    /// Disturbance loading, zero padded to `r`.
    pub loading: Vec<f64>,
}

/// Per-step filter output over several data columns sharing one model.
pub struct FilterOutput {
    /// Innovations divided by `sqrt(F_t)`, row-major `n x ncol`.
    pub scaled: Vec<f64>,
    pub sum_log_f: f64,
}

/// Relative size of the remaining covariance change at which the gain is
/// treated as constant.
const STEADY_TOL: f64 = 1e-15;

impl StateSpace {
    /// `ar[i]` multiplies `u_{t-1-i}`; `ma[j]` multiplies `e_{t-1-j}`.
    pub fn new(ar: &[f64], ma: &[f64]) -> Self {
        let r = ar.len().max(ma.len() + 1);
        let mut phi = vec![0.0; r];
        phi[..ar.len()].copy_from_slice(ar);
        let mut loading = vec![0.0; r];
        loading[0] = 1.0;
        loading[1..=ma.len()].copy_from_slice(ma);
        Self { r, p: ar.len(), phi, loading }
    }

    /// `T x` for a state vector.
    #[inline]
    pub fn transition(&self, x: &[f64], out: &mut [f64]) {
        let r = self.r;
        let x0 = x[0];
        for i in 0..r - 1 {
            out[i] = self.phi[i] * x0 + x[i + 1];
        }
        out[r - 1] = self.phi[r - 1] * x0;
    }

    /// MA(infinity) weights `psi_0..=psi_len`.
    fn psi(&self, len: usize) -> Vec<f64> {
        let mut psi = vec![0.0; len + 1];
        for j in 0..=len {
            let mut v = if j < self.r { self.loading[j] } else { 0.0 };
            for k in 1..=self.p.min(j) {
                v += self.phi[k - 1] * psi[j - k];
            }
            psi[j] = v;
        }
        psi
    }

    /// Autocovariances `gamma_0..=gamma_len` of the unit-variance ARMA
    /// process, from the linear system linking the first `p + 1` lags.
    fn autocovariance(&self, psi: &[f64], len: usize) -> Option<Vec<f64>> {
        let p = self.p;
        let q = self.r - 1;
        // Right-hand side: sum_{j=h}^{q} m_j psi_{j-h}.
        let rhs = |h: usize| -> f64 { (h..=q).map(|j| self.loading[j] * psi[j - h]).sum() };
        let n = p + 1;
        let mut a = vec![0.0; n * n];
        let mut b: Vec<f64> = (0..n).map(rhs).collect();
        for h in 0..n {
            a[h * n + h] += 1.0;
            for k in 1..=p {
                a[h * n + h.abs_diff(k)] -= self.phi[k - 1];
            }
        }
        solve_dense(&mut a, &mut b, n)?;
        let mut gamma = b;
        gamma.resize(len.max(p) + 1, 0.0);
        for h in n..=len {
            let mut v = if h <= q { rhs(h) } else { 0.0 };
            for k in 1..=p {
                v += self.phi[k - 1] * gamma[h - k];
            }
            gamma[h] = v;
        }
        (gamma[0] > 0.0 && gamma.iter().all(|g| g.is_finite())).then_some(gamma)
    }

    /// Unconditional state covariance solving `P = T P T' + R R'`.
    ///
    /// The first column is `Cov(alpha_i, u_t)`, which follows from the
    /// autocovariances and MA weights; the rest comes from stepping the
    /// stationary identity `alpha_t[i] = alpha_{t+1}[i-1] - phi_{i-1} u_t -
    /// R_{i-1} e_{t+1}` down the diagonals.
    pub fn stationary_covariance(&self) -> Option<Vec<f64>> {
        let r = self.r;
        let psi = self.psi(r);
        let gamma = self.autocovariance(&psi, r)?;
        let mut p = vec![0.0; r * r];
        for i in 0..r {
            let mut v = 0.0;
            for k in i..r {
                v += self.phi[k] * gamma[1 + k - i] + self.loading[k] * psi[k - i];
            }
            p[i * r] = v;
            p[i] = v;
        }
        // c_i = Cov(alpha_{t+1}[i], u_t)
        let c: Vec<f64> = (0..r).map(|i| self.phi[i] * p[0] + if i + 1 < r { p[(i + 1) * r] } else { 0.0 }).collect();
        for i in 1..r {
            for j in i..r {
                let v = p[(i - 1) * r + j - 1] - self.phi[j - 1] * c[i - 1] - self.phi[i - 1] * c[j - 1]
                    + self.phi[i - 1] * self.phi[j - 1] * p[0]
                    - self.loading[i - 1] * self.loading[j - 1];
                p[i * r + j] = v;
                p[j * r + i] = v;
            }
        }
        if !(p[0] > 0.0) || p.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(p)
    }

    /// Runs the filter over `ncol` columns of `data` (row-major, `n` rows).
    /// When `states` is given, the predicted state of column 0 before each
    /// observation is written there, followed by the prediction one step past
    /// the end (`(n + 1) * r` values).
    ///
    /// Started from the stationary covariance, the first covariance change
    /// `P_1 - P_0 = -k k' / F_0` has rank one and keeps rank one, so the gain
    /// and innovation variance follow Chandrasekhar-type recursions in O(r)
    /// per step: with `P_{t+1} - P_t = m_t w_t w_t'`,
    /// `F_{t+1} = F_t + m_t w_0^2`, `k_{t+1} = k_t + m_t w_0 T w_t`,
    /// `w_{t+1} = T w_t - k_{t+1} w_0 / F_{t+1}` and
    /// `m_{t+1} = m_t + m_t^2 w_0^2 / F_t`, where `k_t = T P_t e_1`.
    pub fn filter(&self, data: &[f64], ncol: usize, mut states: Option<&mut Vec<f64>>) -> Option<FilterOutput> {
        let r = self.r;
        let n = data.len() / ncol.max(1);
        let p0 = self.stationary_covariance()?;
        let mut f = p0[0];
        let col: Vec<f64> = (0..r).map(|i| p0[i * r]).collect();
        let mut k = vec![0.0; r];
        self.transition(&col, &mut k);
        let mut w = k.clone();
        let mut m = -1.0 / f;
        let mut tw = vec![0.0; r];
        let mut steady = false;
        let mut log_f = ln(f);
        let mut inv_f = 1.0 / f;
        let mut inv_sqrt_f = libm::sqrt(inv_f);

        // Column-major predicted states, one contiguous block per column.
        let mut a = vec![0.0; r * ncol];
        let mut scaled = vec![0.0; n * ncol];
        let mut sum_log_f = 0.0;
        if let Some(st) = states.as_deref_mut() {
            st.clear();
            st.reserve((n + 1) * r);
        }
        let phi = &self.phi[..r];
        for t in 0..n {
            sum_log_f += log_f;
            if let Some(st) = states.as_deref_mut() {
                st.extend_from_slice(&a[..r]);
            }
            let row = &data[t * ncol..(t + 1) * ncol];
            let out = &mut scaled[t * ncol..(t + 1) * ncol];
            for c in 0..ncol {
                let ac = &mut a[c * r..(c + 1) * r];
                let a0 = ac[0];
                let v = row[c] - a0;
                out[c] = v * inv_sqrt_f;
                let kv = v * inv_f;
                ac.copy_within(1.., 0);
                ac[r - 1] = 0.0;
                for ((x, p), g) in ac.iter_mut().zip(phi).zip(&k) {
                    *x += p * a0 + g * kv;
                }
            }
            if !steady {
                let w0 = w[0];
                let mw0 = m * w0;
                let f_next = f + mw0 * w0;
                if !(f_next > 1e-300) || !f_next.is_finite() {
                    return None;
                }
                self.transition(&w, &mut tw);
                for i in 0..r {
                    k[i] += mw0 * tw[i];
                }
                let scale = w0 / f_next;
                for i in 0..r {
                    w[i] = tw[i] - k[i] * scale;
                }
                m += mw0 * mw0 / f;
                f = f_next;
                log_f = ln(f);
                inv_f = 1.0 / f;
                inv_sqrt_f = libm::sqrt(inv_f);
                let wmax = w.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                if m.abs() * wmax * wmax <= STEADY_TOL * f {
                    steady = true;
                }
            }
        }
        if let Some(st) = states {
            st.extend_from_slice(&a[..r]);
        }
        Some(FilterOutput { scaled, sum_log_f })
    }
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if !(a[piv * n + col].abs() > 1e-300) {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = b[col];
        for j in col + 1..n {
            v -= a[col * n + j] * b[j];
        }
        b[col] = v / a[col * n + col];
    }
    Some(())
}
