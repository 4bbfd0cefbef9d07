//! Counterfactual imputation of an anomalous period.
//!
//! An additive model (piecewise-linear trend, weekly and yearly Fourier
//! seasonality, holiday offsets) is fitted by ridge regression on the dates
//! outside the anomaly window. Inside the window each observation is replaced
//! by `max(0, round(fit + e))` with `e ~ N(0, sigma^2)`, where `sigma` is the
//! spread of the in-sample residuals.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calendar::{CalendarDate, DateRange};
use crate::dataset::{CovariateTable, DailySeries, Dataset, SeriesKey};
use crate::error::{Error, Result};
use crate::linalg::ridge_least_squares;
use crate::math::{cos, round, sin, sqrt, TAU};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdditiveConfig {
    pub weekly_order: usize,
    pub yearly_order: usize,
    pub n_changepoints: usize,
    /// Fraction of the series span (from its start) in which changepoints are placed.
    pub changepoint_range: f64,
    pub ridge: f64,
    /// Use this residual spread instead of the fitted one.
    pub sigma_override: Option<f64>,
}

impl Default for AdditiveConfig {
    fn default() -> Self {
        Self { weekly_order: 3, yearly_order: 10, n_changepoints: 10, changepoint_range: 0.8, ridge: 1.0, sigma_override: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    /// Level at the series start.
    pub intercept: f64,
    /// Initial slope, admissions/day per day.
    pub slope: f64,
    pub changepoints: Vec<CalendarDate>,
    /// Slope changes at each changepoint, per day.
    pub deltas: Vec<f64>,
}

/// Fitted additive decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub origin: CalendarDate,
    pub trend: Trend,
    /// `(sin, cos)` coefficient pairs for orders 1..=K of the 7-day cycle.
    pub weekly: Vec<[f64; 2]>,
    /// `(sin, cos)` pairs of the 365.25-day cycle.
    pub yearly: Vec<[f64; 2]>,
    /// Additive offset per holiday, keyed by `MM-DD`.
    pub holiday_effects: BTreeMap<(u8, u8), f64>,
    /// Holiday dates known from the covariates over the modelled range.
    pub holiday_dates: Vec<CalendarDate>,
    pub residual_sigma: f64,
}

fn fourier(dn: i64, period: f64, order: usize, out: &mut Vec<f64>) {
    for k in 1..=order {
        let a = TAU * k as f64 * dn as f64 / period;
        out.push(sin(a));
        out.push(cos(a));
    }
}

fn holiday_key(d: CalendarDate) -> (u8, u8) {
    (d.month(), d.day())
}

struct Design {
    changepoints: Vec<i64>,
    span: f64,
    holiday_keys: Vec<(u8, u8)>,
    holiday_dates: Vec<CalendarDate>,
    weekly_order: usize,
    yearly_order: usize,
}

impl Design {
    fn width(&self) -> usize {
        2 + self.changepoints.len() + 2 * self.weekly_order + 2 * self.yearly_order + self.holiday_keys.len()
    }

    fn row(&self, origin: CalendarDate, date: CalendarDate, out: &mut Vec<f64>) {
        let t = origin.days_until(date);
        out.push(1.0);
        out.push(t as f64 / self.span);
        for &c in &self.changepoints {
            out.push(if t > c { (t - c) as f64 / self.span } else { 0.0 });
        }
        let dn = date.day_number();
        fourier(dn, 7.0, self.weekly_order, out);
        fourier(dn, 365.25, self.yearly_order, out);
        let hk = self.holiday_dates.binary_search(&date).ok().map(|_| holiday_key(date));
        for k in &self.holiday_keys {
            out.push(if hk == Some(*k) { 1.0 } else { 0.0 });
        }
    }
}

impl AdditiveModel {
    /// Fitted value for `date`.
    pub fn predict(&self, date: CalendarDate) -> f64 {
        let t = self.origin.days_until(date) as f64;
        let mut y = self.trend.intercept + self.trend.slope * t;
        for (c, d) in self.trend.changepoints.iter().zip(&self.trend.deltas) {
            let tc = self.origin.days_until(*c) as f64;
            if t > tc {
                y += d * (t - tc);
            }
        }
        let dn = date.day_number();
        for (k, [s, c]) in self.weekly.iter().enumerate() {
            let a = TAU * (k + 1) as f64 * dn as f64 / 7.0;
            y += s * sin(a) + c * cos(a);
        }
        for (k, [s, c]) in self.yearly.iter().enumerate() {
            let a = TAU * (k + 1) as f64 * dn as f64 / 365.25;
            y += s * sin(a) + c * cos(a);
        }
        if self.holiday_dates.binary_search(&date).is_ok() {
            y += self.holiday_effects.get(&holiday_key(date)).copied().unwrap_or(0.0);
        }
        y
    }

    /// Amplitude of the weekly harmonic of order `k` (1-based).
    pub fn weekly_amplitude(&self, k: usize) -> f64 {
        let [s, c] = self.weekly[k - 1];
        sqrt(s * s + c * c)
    }
}

/// Fits the additive model on the non-anomalous dates of `series`.
pub fn fit_additive(series: &DailySeries, covariates: Option<&CovariateTable>, config: &AdditiveConfig) -> Result<AdditiveModel> {
    if !(config.ridge >= 0.0) || !(0.0..=1.0).contains(&config.changepoint_range) {
        return Err(Error::config("ridge must be >= 0 and changepoint_range in [0, 1]"));
    }
    let n = series.len();
    let train: Vec<usize> = (0..n).filter(|&i| !series.is_anomalous(i)).collect();
    if train.is_empty() {
        return Err(Error::insufficient("nothing to fit on: anomaly window covers all data"));
    }
    if config.yearly_order > 0 && train.len() < 730 {
        return Err(Error::insufficient(format!("yearly seasonality needs two years of non-anomalous data, have {} days", train.len())));
    }
    let holiday_dates: Vec<CalendarDate> = match covariates {
        Some(cov) => cov.aligned(series.range())?.iter().filter(|r| r.is_holiday).map(|r| r.date).collect(),
        None => Vec::new(),
    };
    let mut holiday_keys: Vec<(u8, u8)> = holiday_dates.iter().map(|&d| holiday_key(d)).collect();
    holiday_keys.sort_unstable();
    holiday_keys.dedup();

    let span = (n.max(2) - 1) as f64;
    let window = series.anomaly_window;
    let changepoints: Vec<i64> = (1..=config.n_changepoints)
        .map(|j| (j as f64 * config.changepoint_range * span / config.n_changepoints as f64) as i64)
        .filter(|&c| c > 0 && !window.is_some_and(|w| w.contains(series.start.add_days(c))))
        .collect::<Vec<_>>();
    let mut changepoints = changepoints;
    changepoints.dedup();

    let design =
        Design { changepoints, span, holiday_keys, holiday_dates, weekly_order: config.weekly_order, yearly_order: config.yearly_order };
    let p = design.width();
    let mut z = Vec::with_capacity(train.len() * p);
    let mut y = Vec::with_capacity(train.len());
    for &i in &train {
        design.row(series.start, series.date_at(i), &mut z);
        y.push(f64::from(series.counts[i]));
    }
    let mut penalty = vec![config.ridge; p];
    penalty[0] = 0.0;
    penalty[1] = 0.0;
    let beta = ridge_least_squares(&z, p, &y, &penalty)?;

    let n_cp = design.changepoints.len();
    let mut at = 2 + n_cp;
    let take_pairs = |at: &mut usize, order: usize| -> Vec<[f64; 2]> {
        let v = (0..order).map(|k| [beta[*at + 2 * k], beta[*at + 2 * k + 1]]).collect();
        *at += 2 * order;
        v
    };
    let weekly = take_pairs(&mut at, config.weekly_order);
    let yearly = take_pairs(&mut at, config.yearly_order);
    let holiday_effects: BTreeMap<(u8, u8), f64> = design.holiday_keys.iter().enumerate().map(|(j, &k)| (k, beta[at + j])).collect();
    let mut model = AdditiveModel {
        origin: series.start,
        trend: Trend {
            intercept: beta[0],
            slope: beta[1] / span,
            changepoints: design.changepoints.iter().map(|&c| series.start.add_days(c)).collect(),
            deltas: beta[2..2 + n_cp].iter().map(|d| d / span).collect(),
        },
        weekly,
        yearly,
        holiday_effects,
        holiday_dates: design.holiday_dates,
        residual_sigma: 0.0,
    };
    // Population standard deviation over the training dates.
    let ss: f64 = train
        .iter()
        .map(|&i| {
            let r = f64::from(series.counts[i]) - model.predict(series.date_at(i));
            r * r
        })
        .sum();
    model.residual_sigma = match config.sigma_override {
        Some(s) if s >= 0.0 => s,
        Some(s) => return Err(Error::config(format!("sigma override {s} < 0"))),
        None => sqrt(ss / train.len() as f64),
    };
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub key: SeriesKey,
    pub window: DateRange,
    pub n_replaced: usize,
    pub sigma: f64,
    pub seed: u64,
}

/// `max(0, round(value))` with ties rounded away from zero.
pub fn counterfactual_count(value: f64) -> u32 {
    let r = round(value);
    if r <= 0.0 || !r.is_finite() {
        0
    } else {
        r as u32
    }
}

/// Replaces the anomaly-window counts of `series` with stochastic draws
/// around the model fit.
pub fn impute_window(series: &DailySeries, model: &AdditiveModel, seed: u64) -> Result<(DailySeries, ImputationReport)> {
    let window = series.anomaly_window.ok_or_else(|| Error::data(format!("series {} has no anomaly window", series.key)))?;
    let sigma = model.residual_sigma;
    let mut rng = rng::stream(seed, 0);
    let mut out = series.clone();
    let mut n_replaced = 0;
    for (i, count) in out.counts.iter_mut().enumerate() {
        let date = series.date_at(i);
        if !window.contains(date) {
            continue;
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        *count = counterfactual_count(model.predict(date) + sigma * z);
        n_replaced += 1;
    }
    let report = ImputationReport { key: series.key, window, n_replaced, sigma, seed };
    Ok((out, report))
}

/// Imputes every base series independently, then re-derives the aggregates.
/// Series without an anomaly window are left unchanged.
pub fn impute_dataset(dataset: &Dataset, config: &AdditiveConfig, seed: u64) -> Result<(Dataset, Vec<ImputationReport>)> {
    let mut out = dataset.clone();
    let mut reports = Vec::new();
    for (idx, key) in SeriesKey::base_keys().enumerate() {
        let series = &dataset.series[&key];
        if series.anomaly_window.is_none() {
            continue;
        }
        let model = fit_additive(series, dataset.covariates.as_ref(), config)?;
        let (imputed, report) = impute_window(series, &model, rng::mix(seed, idx as u64))?;
        out.series.insert(key, imputed);
        reports.push(report);
    }
    out.rederive_aggregates();
    Ok((out, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Complexity, Ward};
    use crate::math::PI;

    fn key() -> SeriesKey {
        SeriesKey::new(Ward::Surgery, Complexity::Major)
    }

    fn window() -> DateRange {
        DateRange { start: CalendarDate::ymd(2019, 3, 1), end: CalendarDate::ymd(2019, 5, 31) }
    }

    fn series_from(f: impl Fn(usize, CalendarDate) -> u32, n: usize) -> DailySeries {
        let start = CalendarDate::ymd(2017, 1, 1);
        let counts = (0..n).map(|i| f(i, start.add_days(i as i64))).collect();
        DailySeries::new(key(), start, counts, Some(window())).unwrap()
    }

    #[test]
    fn constant_series_fit() {
        let s = series_from(|_, _| 7, 1200);
        let m = fit_additive(&s, None, &AdditiveConfig::default()).unwrap();
        assert!((m.trend.intercept - 7.0).abs() < 1e-6);
        assert!(m.trend.slope.abs() < 1e-6);
        assert!(m.weekly.iter().chain(&m.yearly).all(|[a, b]| a.abs() < 1e-6 && b.abs() < 1e-6));
        assert!(m.residual_sigma < 1e-6);
    }

    #[test]
    fn weekly_amplitude_is_recovered() {
        // Real-valued target; counts are not required to be integers for the
        // regression itself, so fit on a scaled integer copy.
        let start = CalendarDate::ymd(2017, 1, 1);
        let n = 1460;
        let scale = 1000.0;
        let counts: Vec<u32> = (0..n)
            .map(|i| {
                let dow = f64::from(start.add_days(i as i64).weekday());
                round(scale * (10.0 + 3.0 * sin(2.0 * PI * dow / 7.0))) as u32
            })
            .collect();
        let s = DailySeries::new(key(), start, counts, Some(window())).unwrap();
        let m = fit_additive(&s, None, &AdditiveConfig::default()).unwrap();
        let amp = m.weekly_amplitude(1) / scale;
        assert!((amp - 3.0).abs() < 0.05 * 3.0, "amplitude {amp}");
    }

    #[test]
    fn linear_ramp_slope() {
        // y_t = t / 100 in units of 1/100.
        let s = series_from(|i, _| i as u32, 1200);
        let m = fit_additive(&s, None, &AdditiveConfig::default()).unwrap();
        assert!((m.trend.slope / 100.0 - 0.01).abs() < 1e-8);
        assert!(m.trend.deltas.iter().all(|d| d.abs() < 1e-8));
        assert!(m.weekly.iter().chain(&m.yearly).all(|[a, b]| a.abs() < 1e-6 && b.abs() < 1e-6));
    }

    #[test]
    fn window_covering_everything_errors() {
        let start = CalendarDate::ymd(2017, 1, 1);
        let s = DailySeries::new(key(), start, vec![1; 30], Some(DateRange { start, end: start.add_days(29) })).unwrap();
        let err = fit_additive(&s, None, &AdditiveConfig::default()).unwrap_err();
        assert!(err.to_string().contains("nothing to fit on"));
    }

    #[test]
    fn short_series_needs_no_yearly_terms() {
        let start = CalendarDate::ymd(2017, 1, 1);
        let s = DailySeries::new(key(), start, (0..400).map(|i| i % 5).collect(), None).unwrap();
        assert!(fit_additive(&s, None, &AdditiveConfig::default()).is_err());
        let cfg = AdditiveConfig { yearly_order: 0, ..AdditiveConfig::default() };
        assert!(fit_additive(&s, None, &cfg).is_ok());
    }

    fn flat_model(level: f64, sigma: f64) -> AdditiveModel {
        AdditiveModel {
            origin: CalendarDate::ymd(2017, 1, 1),
            trend: Trend { intercept: level, slope: 0.0, changepoints: vec![], deltas: vec![] },
            weekly: vec![],
            yearly: vec![],
            holiday_effects: BTreeMap::new(),
            holiday_dates: vec![],
            residual_sigma: sigma,
        }
    }

    #[test]
    fn zero_sigma_rounds_fit() {
        let s = series_from(|_, _| 9, 900);
        let (out, report) = impute_window(&s, &flat_model(4.4, 0.0), 3).unwrap();
        assert_eq!(report.n_replaced, window().len());
        for i in 0..s.len() {
            if s.is_anomalous(i) {
                assert_eq!(out.counts[i], 4);
            } else {
                assert_eq!(out.counts[i], 9);
            }
        }
    }

    #[test]
    fn clamps_at_zero() {
        let s = series_from(|_, _| 1, 900);
        let (out, _) = impute_window(&s, &flat_model(0.2, 50.0), 11).unwrap();
        assert!(out.counts.contains(&0));
        let (again, _) = impute_window(&s, &flat_model(0.2, 50.0), 11).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(counterfactual_count(2.5), 3);
        assert_eq!(counterfactual_count(-0.5), 0);
        assert_eq!(counterfactual_count(-7.0), 0);
        assert_eq!(counterfactual_count(f64::NAN), 0);
    }
}
