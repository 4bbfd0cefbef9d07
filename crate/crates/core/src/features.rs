//! Per-date feature frames and supervised 14-day-in / 7-day-out windows.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::calendar::CalendarDate;
use crate::dataset::{CovariateTable, DailySeries, SeriesKey};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math::{cos, sin, sqrt, TAU};
use crate::{HORIZON, INPUT_DAYS};

/// Calendar, holiday and weather columns, in frame order.
pub const EXOGENOUS_FEATURES: [&str; 12] = [
    "day_of_week",
    "month",
    "day_of_year",
    "dow_sin",
    "dow_cos",
    "is_weekend",
    "is_holiday",
    "days_since_last_holiday",
    "tmax",
    "tmin",
    "wind_mean",
    "precip_total",
];

/// Lags and rolling statistics of the target, appended after the exogenous block.
pub const AUTOREGRESSIVE_FEATURES: [&str; 11] =
    ["lag_1", "lag_2", "lag_3", "lag_4", "lag_5", "lag_6", "lag_7", "roll_mean_7", "roll_std_7", "roll_mean_14", "roll_std_14"];

/// Regressors handed to the seasonal ARIMA model. The integer calendar
/// columns are left out because they are collinear with the cyclic pair.
pub const SARIMAX_EXOGENOUS: [&str; 8] = ["dow_sin", "dow_cos", "is_weekend", "is_holiday", "tmax", "tmin", "wind_mean", "precip_total"];

/// Rows dropped at the start of every frame for lack of history.
pub const WARMUP_DAYS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub holiday_cap: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { holiday_cap: 365 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub key: SeriesKey,
    pub dates: Vec<CalendarDate>,
    pub names: Vec<String>,
    /// `dates.len() × names.len()`.
    pub values: Mat,
    pub target: Vec<f64>,
}

impl FeatureFrame {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some((0..self.len()).map(|r| self.values.at(r, j)).collect())
    }

    /// Row-major sub-matrix of the named columns.
    pub fn select(&self, names: &[&str]) -> Result<Mat> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::data(format!("frame has no column {n}"))))
            .collect::<Result<Vec<usize>>>()?;
        let mut m = Mat::zeros(self.len(), idx.len());
        for r in 0..self.len() {
            for (c, &j) in idx.iter().enumerate() {
                *m.at_mut(r, c) = self.values.at(r, j);
            }
        }
        Ok(m)
    }

    pub fn index_of(&self, date: CalendarDate) -> Option<usize> {
        let i = self.dates.first()?.days_until(date);
        (i >= 0 && (i as usize) < self.len()).then_some(i as usize)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, sqrt(v))
}

/// Builds the feature frame of one series. The first [`WARMUP_DAYS`] dates
/// are dropped so every lag and rolling window is complete.
pub fn build_frame(
    series: &DailySeries,
    covariates: &CovariateTable,
    include_autoregressive: bool,
    config: &FeatureConfig,
) -> Result<FeatureFrame> {
    let records = covariates.aligned(series.range())?;
    let n = series.len();
    if n <= WARMUP_DAYS {
        return Err(Error::insufficient(format!("series of {n} days is shorter than the {WARMUP_DAYS}-day warm-up")));
    }
    let mut names: Vec<String> = EXOGENOUS_FEATURES.iter().map(|s| s.to_string()).collect();
    if include_autoregressive {
        names.extend(AUTOREGRESSIVE_FEATURES.iter().map(|s| s.to_string()));
    }
    let f = names.len();
    let y: Vec<f64> = series.counts.iter().map(|&c| f64::from(c)).collect();

    let mut since_holiday = vec![config.holiday_cap; n];
    let mut last: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if r.is_holiday {
            last = Some(i);
        }
        if let Some(l) = last {
            since_holiday[i] = ((i - l) as u32).min(config.holiday_cap);
        }
    }

    let rows = n - WARMUP_DAYS;
    let mut values = Mat::zeros(rows, f);
    let mut dates = Vec::with_capacity(rows);
    for (r, t) in (WARMUP_DAYS..n).enumerate() {
        let rec = &records[t];
        let date = rec.date;
        let dow = f64::from(date.weekday());
        let row = values.row_mut(r);
        row[0] = dow;
        row[1] = f64::from(date.month());
        row[2] = f64::from(date.day_of_year());
        row[3] = sin(TAU * dow / 7.0);
        row[4] = cos(TAU * dow / 7.0);
        row[5] = if date.is_weekend() { 1.0 } else { 0.0 };
        row[6] = if rec.is_holiday { 1.0 } else { 0.0 };
        row[7] = f64::from(since_holiday[t]);
        row[8] = rec.tmax;
        row[9] = rec.tmin;
        row[10] = rec.wind_mean;
        row[11] = rec.precip_total;
        if include_autoregressive {
            for k in 1..=7 {
                row[11 + k] = y[t - k];
            }
            let (m7, s7) = mean_std(&y[t + 1 - 7..=t]);
            let (m14, s14) = mean_std(&y[t + 1 - 14..=t]);
            row[19] = m7;
            row[20] = s7;
            row[21] = m14;
            row[22] = s14;
        }
        dates.push(date);
    }
    Ok(FeatureFrame { key: series.key, dates, names, values, target: y[WARMUP_DAYS..].to_vec() })
}

/// One supervised example: the 14 frame rows ending at `origin` and the
/// targets of the 7 following days.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub origin: CalendarDate,
    /// `INPUT_DAYS × F`, oldest day first.
    pub x: Mat,
    pub y: [f64; HORIZON],
}

impl WindowSample {
    pub fn target_dates(&self) -> impl Iterator<Item = CalendarDate> + '_ {
        (1..=HORIZON as i64).map(move |h| self.origin.add_days(h))
    }
}

/// All windows of the frame with stride one; `len - 20` samples, or none
/// when the frame is shorter than 21 rows.
pub fn make_windows(frame: &FeatureFrame) -> Vec<WindowSample> {
    let n = frame.len();
    let need = INPUT_DAYS + HORIZON;
    if n < need {
        return Vec::new();
    }
    let f = frame.n_features();
    (INPUT_DAYS - 1..n - HORIZON)
        .map(|t| {
            let first = t + 1 - INPUT_DAYS;
            let x = Mat::from_vec(INPUT_DAYS, f, frame.values.data[first * f..(t + 1) * f].to_vec());
            let mut y = [0.0; HORIZON];
            y.copy_from_slice(&frame.target[t + 1..t + 1 + HORIZON]);
            WindowSample { origin: frame.dates[t], x, y }
        })
        .collect()
}

/// Splits windows into those whose targets lie entirely before the final
/// `test_days` dates and those whose targets lie entirely inside them.
/// Windows straddling the boundary are discarded.
pub fn chronological_split(samples: &[WindowSample], test_days: usize) -> Result<(Vec<WindowSample>, Vec<WindowSample>)> {
    let last = samples.last().ok_or_else(|| Error::insufficient("no windows to split"))?.origin.add_days(HORIZON as i64);
    let span = samples[0].origin.add_days(1 - INPUT_DAYS as i64).days_until(last) as usize + 1;
    if test_days >= span {
        return Err(Error::config(format!("test_days = {test_days} is not shorter than the series ({span} days)")));
    }
    let first_test = last.add_days(1 - test_days as i64);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        let first_target = s.origin.succ();
        let last_target = s.origin.add_days(HORIZON as i64);
        if last_target < first_test {
            train.push(s.clone());
        } else if first_target >= first_test {
            test.push(s.clone());
        }
    }
    Ok((train, test))
}

pub const STD_FLOOR: f64 = 1e-8;

/// Z-scoring statistics computed from training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: [f64; HORIZON],
    pub target_std: [f64; HORIZON],
}

impl StandardizationParams {
    /// Feature statistics pool every row of every window; target statistics
    /// are per horizon. Standard deviations are population values floored at
    /// [`STD_FLOOR`].
    pub fn fit(train: &[WindowSample]) -> Result<Self> {
        let first = train.first().ok_or_else(|| Error::insufficient("empty training set"))?;
        let f = first.x.cols;
        let mut sum = vec![0.0; f];
        let mut count = 0.0;
        for s in train {
            for r in 0..s.x.rows {
                for (a, v) in sum.iter_mut().zip(s.x.row(r)) {
                    *a += v;
                }
                count += 1.0;
            }
        }
        let feature_mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let mut ss = vec![0.0; f];
        for s in train {
            for r in 0..s.x.rows {
                for ((a, v), m) in ss.iter_mut().zip(s.x.row(r)).zip(&feature_mean) {
                    *a += (v - m) * (v - m);
                }
            }
        }
        let feature_std = ss.iter().map(|s| sqrt(s / count).max(STD_FLOOR)).collect();
        let mut target_mean = [0.0; HORIZON];
        let mut target_std = [0.0; HORIZON];
        for h in 0..HORIZON {
            let col: Vec<f64> = train.iter().map(|s| s.y[h]).collect();
            let (m, sd) = mean_std(&col);
            target_mean[h] = m;
            target_std[h] = sd.max(STD_FLOOR);
        }
        Ok(Self { feature_mean, feature_std, target_mean, target_std })
    }

    pub fn n_features(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn scale_x(&self, x: &Mat) -> Mat {
        let mut out = x.clone();
        for r in 0..out.rows {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.feature_mean[c]) / self.feature_std[c];
            }
        }
        out
    }

    pub fn unscale_x(&self, x: &Mat) -> Mat {
        let mut out = x.clone();
        for r in 0..out.rows {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.feature_std[c] + self.feature_mean[c];
            }
        }
        out
    }

    pub fn scale_y(&self, y: &[f64; HORIZON]) -> [f64; HORIZON] {
        core::array::from_fn(|h| (y[h] - self.target_mean[h]) / self.target_std[h])
    }

    pub fn unscale_y(&self, y: &[f64; HORIZON]) -> [f64; HORIZON] {
        core::array::from_fn(|h| y[h] * self.target_std[h] + self.target_mean[h])
    }

    pub fn apply(&self, s: &WindowSample) -> WindowSample {
        WindowSample { origin: s.origin, x: self.scale_x(&s.x), y: self.scale_y(&s.y) }
    }

    pub fn invert(&self, s: &WindowSample) -> WindowSample {
        WindowSample { origin: s.origin, x: self.unscale_x(&s.x), y: self.unscale_y(&s.y) }
    }
}

/// Z-scores both partitions with statistics from `train`.
pub fn standardize(train: &[WindowSample], test: &[WindowSample]) -> Result<(Vec<WindowSample>, Vec<WindowSample>, StandardizationParams)> {
    let params = StandardizationParams::fit(train)?;
    let a = train.iter().map(|s| params.apply(s)).collect();
    let b = test.iter().map(|s| params.apply(s)).collect();
    Ok((a, b, params))
}
