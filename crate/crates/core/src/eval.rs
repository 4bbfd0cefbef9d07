//! Seasonal-naive baseline, MAE/MAPE, multi-run aggregation and best/worst
//! week diagnostics over a forecast record log.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::calendar::CalendarDate;
use crate::dataset::SeriesKey;
use crate::error::{Error, Result};
use crate::math::{abs, sqrt};
use crate::HORIZON;

/// The forecasters compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sarimax,
    Gbt,
    Lstm,
    SeasonalNaive,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Sarimax, ModelKind::Gbt, ModelKind::Lstm, ModelKind::SeasonalNaive];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Sarimax => "sarimax",
            ModelKind::Gbt => "gbt",
            ModelKind::Lstm => "lstm",
            ModelKind::SeasonalNaive => "seasonal_naive",
        }
    }

    pub fn from_id(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id() == s)
    }

    /// Whether repeated runs with different seeds produce the same forecast.
    pub fn is_deterministic(self) -> bool {
        !matches!(self, ModelKind::Lstm)
    }

    /// Whether the protocol trains this model once per seed.
    pub fn is_seeded(self) -> bool {
        matches!(self, ModelKind::Gbt | ModelKind::Lstm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// One forecast for one target day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub key: SeriesKey,
    pub model: ModelKind,
    pub seed: u64,
    pub origin: CalendarDate,
    /// Horizon in days, `1..=7`.
    pub h: u8,
    pub y_true: f64,
    pub y_hat: f64,
}

/// Seasonal-naive forecast from the day at index `origin`: each target day
/// repeats the value observed seven days earlier.
pub fn seasonal_naive(history: &[f64], origin: usize) -> Result<[f64; HORIZON]> {
    if origin >= history.len() || origin + 1 < 7 {
        return Err(Error::insufficient("seasonal naive forecast needs 7 observed days up to the origin"));
    }
    Ok(core::array::from_fn(|k| history[origin + 1 + k - 7]))
}

/// Mean absolute error over `(y_true, y_hat)` pairs.
pub fn mae_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (y, p) in pairs {
        sum += abs(y - p);
        n += 1;
    }
    if n == 0 {
        return Err(Error::insufficient("MAE of an empty record set"));
    }
    Ok(sum / n as f64)
}

pub fn mae(records: &[ForecastRecord]) -> Result<f64> {
    mae_pairs(records.iter().map(|r| (r.y_true, r.y_hat)))
}

/// MAPE in percent over records with a positive true value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// `None` when every true value is zero.
    pub value: Option<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
}

pub fn mape_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Mape {
    let (mut sum, mut used, mut excluded) = (0.0, 0usize, 0usize);
    for (y, p) in pairs {
        if y > 0.0 {
            sum += abs(y - p) / abs(y);
            used += 1;
        } else {
            excluded += 1;
        }
    }
    Mape { value: (used > 0).then(|| 100.0 * sum / used as f64), n_used: used, n_excluded: excluded }
}

pub fn mape(records: &[ForecastRecord]) -> Mape {
    mape_pairs(records.iter().map(|r| (r.y_true, r.y_hat)))
}

/// Summary of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; `None` for fewer than two runs.
    pub std: Option<f64>,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let std = (n > 1).then(|| sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64));
        Some(Self { n, mean, median, std })
    }
}

/// Metrics of one (series, model, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub key: SeriesKey,
    pub model: ModelKind,
    pub seed: u64,
    pub n_records: usize,
    pub mae: f64,
    pub mape: Mape,
}

/// Multi-run summary for one (series, model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub key: SeriesKey,
    pub model: ModelKind,
    pub mae: Aggregate,
    /// Over the runs with a defined MAPE.
    pub mape: Option<Aggregate>,
    pub n_excluded_zero_days: usize,
    /// Runs repeat one deterministic fit, so any spread is zero by construction.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub key: SeriesKey,
    pub model: ModelKind,
    pub seed: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: Vec<RunMetrics>,
    pub summaries: Vec<ModelSummary>,
    pub failures: Vec<Failure>,
}

impl MetricsReport {
    pub fn summary(&self, key: SeriesKey, model: ModelKind) -> Option<&ModelSummary> {
        self.summaries.iter().find(|s| s.key == key && s.model == model)
    }

    pub fn runs_of(&self, key: SeriesKey, model: ModelKind) -> impl Iterator<Item = &RunMetrics> {
        self.runs.iter().filter(move |r| r.key == key && r.model == model)
    }
}

/// Groups the record log by (series, model, seed) and aggregates across
/// seeds. Output order is by key, model, seed regardless of input order.
pub fn build_report(records: &[ForecastRecord], failures: Vec<Failure>) -> MetricsReport {
    let mut groups: BTreeMap<(SeriesKey, ModelKind, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        groups.entry((r.key, r.model, r.seed)).or_default().push((r.y_true, r.y_hat));
    }
    let runs: Vec<RunMetrics> = groups
        .into_iter()
        .map(|((key, model, seed), pairs)| RunMetrics {
            key,
            model,
            seed,
            n_records: pairs.len(),
            mae: mae_pairs(pairs.iter().copied()).expect("groups are non-empty"),
            mape: mape_pairs(pairs.iter().copied()),
        })
        .collect();
    let mut summaries = Vec::new();
    let mut i = 0;
    while i < runs.len() {
        let (key, model) = (runs[i].key, runs[i].model);
        let mut j = i;
        while j < runs.len() && runs[j].key == key && runs[j].model == model {
            j += 1;
        }
        let block = &runs[i..j];
        let maes: Vec<f64> = block.iter().map(|r| r.mae).collect();
        let mapes: Vec<f64> = block.iter().filter_map(|r| r.mape.value).collect();
        summaries.push(ModelSummary {
            key,
            model,
            mae: Aggregate::of(&maes).expect("non-empty block"),
            mape: Aggregate::of(&mapes),
            n_excluded_zero_days: block[0].mape.n_excluded,
            deterministic: model.is_deterministic(),
        });
        i = j;
    }
    let mut failures = failures;
    failures.sort_by_key(|a| (a.key, a.model, a.seed));
    MetricsReport { runs, summaries, failures }
}

/// One 7-day forecast window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekWindow {
    pub origin: CalendarDate,
    pub mae: f64,
    pub actual: [f64; HORIZON],
    pub predicted: [f64; HORIZON],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekDiagnostics {
    pub key: SeriesKey,
    pub model: ModelKind,
    pub seed: u64,
    pub best: WeekWindow,
    pub worst: WeekWindow,
}

/// Best and worst forecast windows per (series, model, seed). Ties resolve
/// to the earliest origin. Windows missing a horizon are skipped.
pub fn week_diagnostics(records: &[ForecastRecord]) -> Vec<WeekDiagnostics> {
    type Slot = ([Option<f64>; HORIZON], [Option<f64>; HORIZON]);
    let mut groups: BTreeMap<(SeriesKey, ModelKind, u64), BTreeMap<CalendarDate, Slot>> = BTreeMap::new();
    for r in records {
        if !(1..=HORIZON as u8).contains(&r.h) {
            continue;
        }
        let slot = groups.entry((r.key, r.model, r.seed)).or_default().entry(r.origin).or_insert(([None; HORIZON], [None; HORIZON]));
        let k = usize::from(r.h - 1);
        slot.0[k] = Some(r.y_true);
        slot.1[k] = Some(r.y_hat);
    }
    let mut out = Vec::new();
    for ((key, model, seed), origins) in groups {
        let mut best: Option<WeekWindow> = None;
        let mut worst: Option<WeekWindow> = None;
        for (origin, (a, p)) in origins {
            if a.iter().chain(&p).any(Option::is_none) {
                continue;
            }
            let actual = a.map(|v| v.unwrap_or_default());
            let predicted = p.map(|v| v.unwrap_or_default());
            let mae = actual.iter().zip(&predicted).map(|(y, q)| abs(y - q)).sum::<f64>() / HORIZON as f64;
            let w = WeekWindow { origin, mae, actual, predicted };
            if best.as_ref().map_or(true, |b| w.mae < b.mae) {
                best = Some(w.clone());
            }
            if worst.as_ref().map_or(true, |b| w.mae > b.mae) {
                worst = Some(w);
            }
        }
        if let (Some(best), Some(worst)) = (best, worst) {
            out.push(WeekDiagnostics { key, model, seed, best, worst });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Complexity, Ward};
    use alloc::vec;

    const KEY: SeriesKey = SeriesKey::new(Ward::Neurology, Complexity::Major);

    fn rec(origin: i64, h: u8, y: f64, p: f64) -> ForecastRecord {
        ForecastRecord {
            key: KEY,
            model: ModelKind::Gbt,
            seed: 1,
            origin: CalendarDate::ymd(2021, 7, 1).add_days(origin),
            h,
            y_true: y,
            y_hat: p,
        }
    }

    #[test]
    fn naive_repeats_last_week() {
        let hist = [9.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(seasonal_naive(&hist, 7).unwrap(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(seasonal_naive(&[4.0; 10], 9).unwrap(), [4.0; HORIZON]);
        assert!(seasonal_naive(&hist, 5).is_err());
    }

    #[test]
    fn naive_is_exact_on_periodic_series() {
        let y: Vec<f64> = (0..70).map(|i| [3.0, 5.0, 8.0, 2.0, 0.0, 1.0, 9.0][i % 7]).collect();
        for o in 6..63 {
            let f = seasonal_naive(&y, o).unwrap();
            assert_eq!(f[..], y[o + 1..o + 8]);
        }
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae_pairs([(10.0, 8.0), (10.0, 12.0)]).unwrap(), 2.0);
        assert_eq!(mae_pairs([(0.0, 1.0)]).unwrap(), 1.0);
        assert_eq!(mae_pairs([(4.0, 4.0)]).unwrap(), 0.0);
        assert!(mae_pairs(core::iter::empty()).is_err());
    }

    #[test]
    fn mape_excludes_zero_days() {
        assert_eq!(mape_pairs([(10.0, 8.0)]).value, Some(20.0));
        let m = mape_pairs([(0.0, 3.0), (5.0, 4.0)]);
        assert_eq!(m.value, Some(20.0));
        assert_eq!(m.n_excluded, 1);
        let none = mape_pairs([(0.0, 3.0), (0.0, 0.0)]);
        assert_eq!(none.value, None);
        assert_eq!(none.n_excluded, 2);
    }

    #[test]
    fn aggregate_uses_sample_std() {
        let a = Aggregate::of(&[1.0, 2.0, 3.0, 10.0]).unwrap();
        assert_eq!(a.mean, 4.0);
        assert_eq!(a.median, 2.5);
        assert!((a.std.unwrap() - sqrt(50.0 / 3.0)).abs() < 1e-12);
        assert_eq!(Aggregate::of(&[7.0]).unwrap().std, None);
    }

    #[test]
    fn diagnostics_pick_extremes_with_earliest_tie() {
        let mut rs = Vec::new();
        for (o, err) in [(0, 3.0), (1, 1.0), (2, 5.0), (3, 1.0)] {
            for h in 1..=7 {
                rs.push(rec(o, h, 10.0, 10.0 + err));
            }
        }
        let d = week_diagnostics(&rs);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].best.origin, CalendarDate::ymd(2021, 7, 2));
        assert_eq!(d[0].best.mae, 1.0);
        assert_eq!(d[0].worst.origin, CalendarDate::ymd(2021, 7, 3));
        assert_eq!(d[0].worst.predicted, [15.0; HORIZON]);
    }

    #[test]
    fn single_origin_best_equals_worst() {
        let rs: Vec<_> = (1..=7).map(|h| rec(0, h, 2.0, 2.0)).collect();
        let d = week_diagnostics(&rs);
        assert_eq!(d[0].best, d[0].worst);
        assert_eq!(d[0].best.mae, 0.0);
    }

    #[test]
    fn report_groups_and_orders_runs() {
        let mut rs = vec![rec(0, 1, 4.0, 2.0)];
        let mut other = rec(0, 1, 4.0, 3.0);
        other.seed = 0;
        rs.push(other);
        let report = build_report(&rs, Vec::new());
        assert_eq!(report.runs.len(), 2);
        assert_eq!(report.runs[0].seed, 0);
        let s = report.summary(KEY, ModelKind::Gbt).unwrap();
        assert_eq!(s.mae.mean, 1.5);
        assert_eq!(s.mae.n, 2);
    }
}
