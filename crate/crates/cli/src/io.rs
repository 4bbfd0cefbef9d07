//! CSV and JSON file formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file reads back to bit-identical values.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wardcast_core::calendar::{CalendarDate, DateRange};
use wardcast_core::dataset::{AliasTable, Complexity, CovariateRecord, CovariateTable, DailySeries, Dataset, SeriesKey, Ward};
use wardcast_core::eval::{ForecastRecord, MetricsReport, ModelKind, WeekDiagnostics};
use wardcast_core::experiment::table_keys;
use wardcast_core::explain::{FeatureGain, ImportanceReport, Waterfall, WaterfallStep};
use wardcast_core::features::FeatureFrame;
use wardcast_core::imputer::ImputationReport;
use wardcast_core::tuner::TuneResult;

use crate::error::{CliError, Result};

pub const SERIES_DIR: &str = "series";
pub const COVARIATES_FILE: &str = "covariates.csv";
pub const DATASET_FILE: &str = "dataset.json";
pub const REMAINDER_LABEL: &str = "(remainder)";

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::file(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::file(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::file(path, e))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::file(path, e))
}

/// Writes a CSV file from pre-formatted string rows.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let file = File::create(path).map_err(|e| CliError::file(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let err = |e: csv::Error| CliError::file(path, e);
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::file(path, e))
}

type Rows = Vec<(u64, csv::StringRecord)>;

/// Rows of a headed CSV file with their 1-based line numbers.
fn read_csv(path: &Path, reader: impl Read) -> Result<(Vec<String>, Rows)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let header: Vec<String> = r.headers().map_err(|e| CliError::file(path, e))?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::file(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::file(path, e))
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::file(path, format!("missing column {name:?} (found {})", header.join(","))))
}

fn row_err(path: &Path, line: u64, message: impl ToString) -> CliError {
    CliError::Row { path: path.to_path_buf(), line, message: message.to_string() }
}

fn field<'a>(path: &Path, line: u64, rec: &'a csv::StringRecord, i: usize) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| row_err(path, line, format!("missing field {}", i + 1)))
}

fn parse_f64(path: &Path, line: u64, s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| row_err(path, line, format!("invalid number {s:?}")))
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<CalendarDate> {
    s.parse::<CalendarDate>().map_err(|e| row_err(path, line, e))
}

/// A row skipped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Admissions {
    pub dataset: Dataset,
    pub rejected: Vec<RejectedRow>,
}

/// Reads an admissions log with header `date,ward,complexity[,count]`.
///
/// Rows without a count are single admissions. Rows with an unparseable
/// date or count are skipped and reported; unknown labels are fatal. Days
/// with no rows inside the observed range count as zero.
pub fn ingest_admissions(path: &Path, aliases: &AliasTable) -> Result<Admissions> {
    parse_admissions(path, open(path)?, aliases)
}

pub fn parse_admissions(path: &Path, reader: impl Read, aliases: &AliasTable) -> Result<Admissions> {
    let (header, rows) = read_csv(path, reader)?;
    let (di, wi, ci) = (column(path, &header, "date")?, column(path, &header, "ward")?, column(path, &header, "complexity")?);
    let ni = header.iter().position(|h| h == "count");
    let mut counts: BTreeMap<SeriesKey, BTreeMap<CalendarDate, u64>> = BTreeMap::new();
    let mut rejected = Vec::new();
    for (line, rec) in rows {
        let date = match field(path, line, &rec, di)?.parse::<CalendarDate>() {
            Ok(d) => d,
            Err(e) => {
                rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let n = match ni {
            None => 1,
            Some(i) => match field(path, line, &rec, i)?.parse::<u64>() {
                Ok(n) => n,
                Err(_) => {
                    rejected.push(RejectedRow { line, reason: format!("invalid count {:?}", rec.get(i).unwrap_or("")) });
                    continue;
                }
            },
        };
        let ward = aliases.ward(field(path, line, &rec, wi)?).map_err(|e| row_err(path, line, e))?;
        let complexity = aliases.complexity(field(path, line, &rec, ci)?).map_err(|e| row_err(path, line, e))?;
        let key = SeriesKey::new(ward, complexity);
        if key.is_aggregate() {
            return Err(row_err(path, line, format!("{key} is derived from the base series and cannot be ingested")));
        }
        *counts.entry(key).or_default().entry(date).or_default() += n;
    }
    let dates = counts.values().flat_map(|m| m.keys().copied());
    let (Some(start), Some(end)) = (dates.clone().min(), dates.max()) else {
        return Err(CliError::file(path, "no rows"));
    };
    let len = start.days_until(end) as usize + 1;
    let mut base = Vec::new();
    for (key, by_date) in counts {
        let mut c = vec![0u32; len];
        for (d, n) in by_date {
            c[start.days_until(d) as usize] =
                u32::try_from(n).map_err(|_| CliError::file(path, format!("count overflow for {key} at {d}")))?;
        }
        base.push(DailySeries::new(key, start, c, None)?);
    }
    let dataset = Dataset::from_base(base, None)?;
    Ok(Admissions { dataset, rejected })
}

pub const COVARIATE_HEADER: [&str; 6] = ["date", "tmax_c", "tmin_c", "wind_ms", "precip_mm", "is_holiday"];

/// Reads a covariate table with header
/// `date,tmax_c,tmin_c,wind_ms,precip_mm,is_holiday`.
pub fn ingest_covariates(path: &Path) -> Result<CovariateTable> {
    parse_covariates(path, open(path)?)
}

pub fn parse_covariates(path: &Path, reader: impl Read) -> Result<CovariateTable> {
    let (header, rows) = read_csv(path, reader)?;
    let idx = COVARIATE_HEADER.iter().map(|c| column(path, &header, c)).collect::<Result<Vec<usize>>>()?;
    let mut records = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let f = |k: usize| field(path, line, &rec, idx[k]);
        let is_holiday = match f(5)?.to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(row_err(path, line, format!("is_holiday must be 0 or 1, got {other:?}"))),
        };
        records.push(CovariateRecord {
            date: parse_date(path, line, f(0)?)?,
            tmax: parse_f64(path, line, f(1)?)?,
            tmin: parse_f64(path, line, f(2)?)?,
            wind_mean: parse_f64(path, line, f(3)?)?,
            precip_total: parse_f64(path, line, f(4)?)?,
            is_holiday,
        });
    }
    if records.is_empty() {
        return Err(CliError::file(path, "no rows"));
    }
    Ok(CovariateTable::from_records(records)?)
}

pub fn write_covariates(path: &Path, table: &CovariateTable) -> Result<()> {
    let rows = table.records().iter().map(|r| {
        vec![
            r.date.to_string(),
            r.tmax.to_string(),
            r.tmin.to_string(),
            r.wind_mean.to_string(),
            r.precip_total.to_string(),
            u8::from(r.is_holiday).to_string(),
        ]
    });
    write_csv(path, &COVARIATE_HEADER, rows)
}

pub fn write_series(path: &Path, series: &DailySeries) -> Result<()> {
    let rows = series.dates().zip(&series.counts).map(|(d, c)| vec![d.to_string(), c.to_string()]);
    write_csv(path, &["date", "count"], rows)
}

pub fn read_series(path: &Path, key: SeriesKey) -> Result<DailySeries> {
    let (header, rows) = read_csv(path, open(path)?)?;
    let (di, ci) = (column(path, &header, "date")?, column(path, &header, "count")?);
    let mut start = None;
    let mut counts = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let date = parse_date(path, line, field(path, line, &rec, di)?)?;
        let s = *start.get_or_insert(date);
        if s.days_until(date) != counts.len() as i64 {
            return Err(row_err(path, line, format!("expected consecutive dates, got {date}")));
        }
        let c = field(path, line, &rec, ci)?;
        counts.push(c.parse::<u32>().map_err(|_| row_err(path, line, format!("invalid count {c:?}")))?);
    }
    let start = start.ok_or_else(|| CliError::file(path, "no rows"))?;
    Ok(DailySeries::new(key, start, counts, None)?)
}

/// Summary stored next to a canonical dataset dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub start: CalendarDate,
    pub end: CalendarDate,
    pub n_days: usize,
    pub anomaly_window: Option<DateRange>,
    pub has_covariates: bool,
    pub series: Vec<String>,
}

pub fn series_path(dir: &Path, key: SeriesKey) -> PathBuf {
    dir.join(SERIES_DIR).join(format!("{}.csv", key.slug()))
}

/// Writes one `<ward>_<complexity>.csv` per series, the covariates and a
/// dataset summary.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    create_dir(&dir.join(SERIES_DIR))?;
    for (key, s) in &dataset.series {
        write_series(&series_path(dir, *key), s)?;
    }
    if let Some(cov) = &dataset.covariates {
        write_covariates(&dir.join(COVARIATES_FILE), cov)?;
    }
    let range = dataset.range();
    let info = DatasetInfo {
        start: range.start,
        end: range.end,
        n_days: range.len(),
        anomaly_window: dataset.series.values().next().and_then(|s| s.anomaly_window),
        has_covariates: dataset.covariates.is_some(),
        series: dataset.series.keys().map(|k| k.slug()).collect(),
    };
    write_json(&dir.join(DATASET_FILE), &info)
}

/// Reads a canonical dump. Aggregates are re-derived from the base series
/// and must match any aggregate files present.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let info_path = dir.join(DATASET_FILE);
    if !info_path.exists() {
        return Err(CliError::Missing(format!("{} is not a dataset directory (no {DATASET_FILE})", dir.display())));
    }
    let info: DatasetInfo = read_json(&info_path)?;
    let mut base = Vec::new();
    for key in SeriesKey::base_keys() {
        let p = series_path(dir, key);
        if p.exists() {
            base.push(read_series(&p, key)?.with_anomaly_window(info.anomaly_window)?);
        }
    }
    let covariates = if info.has_covariates { Some(ingest_covariates(&dir.join(COVARIATES_FILE))?) } else { None };
    let dataset = Dataset::from_base(base, covariates)?;
    for key in SeriesKey::all_keys().filter(|k| k.is_aggregate()) {
        let p = series_path(dir, key);
        if p.exists() && read_series(&p, key)?.counts != dataset.series[&key].counts {
            return Err(CliError::file(&p, format!("{key} is not the sum of its components")));
        }
    }
    Ok(dataset)
}

pub fn write_frame(path: &Path, frame: &FeatureFrame) -> Result<()> {
    let mut header: Vec<&str> = vec!["date"];
    header.extend(frame.names.iter().map(String::as_str));
    header.push("target");
    let rows = (0..frame.len()).map(|r| {
        let mut row = Vec::with_capacity(frame.n_features() + 2);
        row.push(frame.dates[r].to_string());
        row.extend(frame.values.row(r).iter().map(f64::to_string));
        row.push(frame.target[r].to_string());
        row
    });
    write_csv(path, &header, rows)
}

pub const RECORD_HEADER: [&str; 7] = ["series", "model", "seed", "origin", "h", "y_true", "y_hat"];

pub fn write_records(path: &Path, records: &[ForecastRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        vec![
            r.key.slug(),
            r.model.id().to_string(),
            r.seed.to_string(),
            r.origin.to_string(),
            r.h.to_string(),
            r.y_true.to_string(),
            r.y_hat.to_string(),
        ]
    });
    write_csv(path, &RECORD_HEADER, rows)
}

pub fn read_records(path: &Path) -> Result<Vec<ForecastRecord>> {
    let (header, rows) = read_csv(path, open(path)?)?;
    let idx = RECORD_HEADER.iter().map(|c| column(path, &header, c)).collect::<Result<Vec<usize>>>()?;
    rows.into_iter()
        .map(|(line, rec)| {
            let f = |k: usize| field(path, line, &rec, idx[k]);
            let key = SeriesKey::from_slug(f(0)?).ok_or_else(|| row_err(path, line, format!("unknown series {:?}", f(0).unwrap_or(""))))?;
            let model = ModelKind::from_id(f(1)?).ok_or_else(|| row_err(path, line, format!("unknown model {:?}", f(1).unwrap_or(""))))?;
            let int = |s: &str| s.parse::<u64>().map_err(|_| row_err(path, line, format!("invalid integer {s:?}")));
            Ok(ForecastRecord {
                key,
                model,
                seed: int(f(2)?)?,
                origin: parse_date(path, line, f(3)?)?,
                h: u8::try_from(int(f(4)?)?).map_err(|_| row_err(path, line, "horizon out of range"))?,
                y_true: parse_f64(path, line, f(5)?)?,
                y_hat: parse_f64(path, line, f(6)?)?,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-run metrics, one row per (series, model, seed).
pub fn write_runs(path: &Path, report: &MetricsReport) -> Result<()> {
    let rows = report.runs.iter().map(|r| {
        vec![
            r.key.slug(),
            r.model.id().to_string(),
            r.seed.to_string(),
            r.n_records.to_string(),
            r.mae.to_string(),
            opt(r.mape.value),
            r.mape.n_used.to_string(),
            r.mape.n_excluded.to_string(),
        ]
    });
    write_csv(path, &["series", "model", "seed", "n_records", "mae", "mape", "mape_n_used", "mape_n_excluded"], rows)
}

/// Multi-run aggregates in long form.
pub fn write_summary(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut rows = Vec::new();
    for s in &report.summaries {
        let aggs = [("mae", Some(&s.mae)), ("mape", s.mape.as_ref())];
        for (metric, agg) in aggs {
            rows.push(vec![
                s.key.slug(),
                s.model.id().to_string(),
                metric.to_string(),
                agg.map(|a| a.n.to_string()).unwrap_or_else(|| "0".into()),
                opt(agg.map(|a| a.mean)),
                opt(agg.map(|a| a.median)),
                opt(agg.and_then(|a| a.std)),
                s.n_excluded_zero_days.to_string(),
                s.deterministic.to_string(),
            ]);
        }
    }
    write_csv(path, &["series", "model", "metric", "n_runs", "mean", "median", "std", "n_excluded_zero_days", "deterministic"], rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mae,
    Mape,
}

/// Wide results table: one row per ward within each complexity block, then
/// total arrivals; one mean column and one standard-deviation column per
/// model.
pub fn write_table(path: &Path, report: &MetricsReport, models: &[ModelKind], metric: Metric) -> Result<()> {
    let mut header = vec!["complexity".to_string(), "ward".to_string()];
    for m in models {
        header.push(format!("{}_mean", m.id()));
        header.push(format!("{}_std", m.id()));
    }
    let keys: Vec<SeriesKey> = table_keys().into_iter().filter(|k| report.summaries.iter().any(|s| s.key == *k)).collect();
    let rows = keys.into_iter().map(|key| {
        let mut row = vec![key.complexity.label().to_string(), key.ward.label().to_string()];
        for &m in models {
            let agg = report.summary(key, m).and_then(|s| match metric {
                Metric::Mae => Some(&s.mae),
                Metric::Mape => s.mape.as_ref(),
            });
            row.push(opt(agg.map(|a| a.mean)));
            row.push(opt(agg.and_then(|a| a.std)));
        }
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, rows)
}

pub fn write_failures(path: &Path, report: &MetricsReport) -> Result<()> {
    let rows = report
        .failures
        .iter()
        .map(|f| vec![f.key.slug(), f.model.id().to_string(), f.seed.map(|s| s.to_string()).unwrap_or_default(), f.message.clone()]);
    write_csv(path, &["series", "model", "seed", "message"], rows)
}

/// Best and worst test weeks with their daily values.
pub fn write_weeks(path: &Path, diagnostics: &[WeekDiagnostics]) -> Result<()> {
    let mut rows = Vec::new();
    for d in diagnostics {
        for (kind, w) in [("best", &d.best), ("worst", &d.worst)] {
            for h in 0..w.actual.len() {
                rows.push(vec![
                    d.key.slug(),
                    d.model.id().to_string(),
                    d.seed.to_string(),
                    kind.to_string(),
                    w.origin.to_string(),
                    w.mae.to_string(),
                    (h + 1).to_string(),
                    w.actual[h].to_string(),
                    w.predicted[h].to_string(),
                ]);
            }
        }
    }
    write_csv(path, &["series", "model", "seed", "week", "origin", "week_mae", "h", "actual", "predicted"], rows)
}

/// Tuning leaderboard, best first: `rank,<grid parameters>,val_mae`.
pub fn write_leaderboard(path: &Path, result: &TuneResult) -> Result<()> {
    let first = &result.leaderboard[0].candidate;
    let mut header = vec!["rank"];
    header.extend(first.params().iter().map(|(n, _)| *n));
    header.push("val_mae");
    let rows = result.leaderboard.iter().map(|e| {
        let mut row = vec![e.rank.to_string()];
        row.extend(e.candidate.params().iter().map(|(_, v)| v.to_string()));
        row.push(e.val_mae.to_string());
        row
    });
    write_csv(path, &header, rows)
}

pub fn write_importance(path: &Path, gains: &[FeatureGain]) -> Result<()> {
    let rows = gains.iter().map(|g| vec![g.feature.clone(), g.gain.to_string(), g.share.to_string()]);
    write_csv(path, &["feature", "gain", "share"], rows)
}

pub fn write_importance_per_horizon(path: &Path, report: &ImportanceReport) -> Result<()> {
    let rows = report.per_horizon.iter().enumerate().flat_map(|(h, gains)| {
        gains.iter().map(move |g| vec![(h + 1).to_string(), g.feature.clone(), g.gain.to_string(), g.share.to_string()])
    });
    write_csv(path, &["h", "feature", "gain", "share"], rows)
}

/// Waterfall as `feature,contribution,base,prediction`; the remainder
/// bucket, when present, is the last row.
pub fn write_waterfall(path: &Path, w: &Waterfall) -> Result<()> {
    let (base, pred) = (w.base.to_string(), w.prediction.to_string());
    let mut rows: Vec<Vec<String>> =
        w.steps.iter().map(|s| vec![s.feature.clone(), s.contribution.to_string(), base.clone(), pred.clone()]).collect();
    if let Some(r) = w.remainder {
        rows.push(vec![REMAINDER_LABEL.to_string(), r.to_string(), base.clone(), pred.clone()]);
    }
    if rows.is_empty() {
        rows.push(vec![String::new(), String::new(), base, pred]);
    }
    write_csv(path, &["feature", "contribution", "base", "prediction"], rows)
}

pub fn read_waterfall(path: &Path) -> Result<Waterfall> {
    let (header, rows) = read_csv(path, open(path)?)?;
    let idx = ["feature", "contribution", "base", "prediction"].iter().map(|c| column(path, &header, c)).collect::<Result<Vec<usize>>>()?;
    let mut w = Waterfall { base: f64::NAN, steps: Vec::new(), remainder: None, prediction: f64::NAN };
    for (line, rec) in rows {
        let f = |k: usize| field(path, line, &rec, idx[k]);
        w.base = parse_f64(path, line, f(2)?)?;
        w.prediction = parse_f64(path, line, f(3)?)?;
        let name = f(0)?;
        if name.is_empty() {
            continue;
        }
        let c = parse_f64(path, line, f(1)?)?;
        if name == REMAINDER_LABEL {
            w.remainder = Some(c);
        } else {
            w.steps.push(WaterfallStep { feature: name.to_string(), contribution: c });
        }
    }
    if w.base.is_nan() {
        return Err(CliError::file(path, "no rows"));
    }
    Ok(w)
}

pub fn write_imputation_reports(path: &Path, reports: &[ImputationReport]) -> Result<()> {
    write_json(path, reports)
}

/// Parses `<ward>_<complexity>` or `total`.
pub fn parse_series_key(s: &str) -> std::result::Result<SeriesKey, String> {
    if s == "total" {
        return Ok(SeriesKey::TOTAL);
    }
    SeriesKey::from_slug(s).ok_or_else(|| {
        let valid: Vec<String> =
            Ward::ALL.iter().flat_map(|w| Complexity::ALL.iter().map(move |c| SeriesKey::new(*w, *c).slug())).collect();
        format!("unknown series {s:?}; valid: total, {}", valid.join(", "))
    })
}
