//! Admission series, covariates and the aggregation identities that tie the
//! ward/complexity breakdown together.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::calendar::{CalendarDate, DateRange};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ward {
    EmergencyMedicine,
    GeneralMedicine,
    Surgery,
    Paediatric,
    Psychiatry,
    Cardiology,
    Neurology,
    Other,
    /// Sum over the eight wards; derived, never ingested.
    TotalAllWards,
}

impl Ward {
    pub const BASE: [Ward; 8] = [
        Ward::EmergencyMedicine,
        Ward::GeneralMedicine,
        Ward::Surgery,
        Ward::Paediatric,
        Ward::Psychiatry,
        Ward::Cardiology,
        Ward::Neurology,
        Ward::Other,
    ];

    pub const ALL: [Ward; 9] = [
        Ward::EmergencyMedicine,
        Ward::GeneralMedicine,
        Ward::Surgery,
        Ward::Paediatric,
        Ward::Psychiatry,
        Ward::Cardiology,
        Ward::Neurology,
        Ward::Other,
        Ward::TotalAllWards,
    ];

    /// Human-readable name as used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Ward::EmergencyMedicine => "Emergency Medicine",
            Ward::GeneralMedicine => "General Medicine",
            Ward::Surgery => "Surgery",
            Ward::Paediatric => "Paediatric",
            Ward::Psychiatry => "Psychiatry",
            Ward::Cardiology => "Cardiology",
            Ward::Neurology => "Neurology",
            Ward::Other => "Other",
            Ward::TotalAllWards => "Total Arrivals",
        }
    }

    /// Lower-case identifier used in file names.
    pub fn slug(self) -> &'static str {
        match self {
            Ward::EmergencyMedicine => "emergency_medicine",
            Ward::GeneralMedicine => "general_medicine",
            Ward::Surgery => "surgery",
            Ward::Paediatric => "paediatric",
            Ward::Psychiatry => "psychiatry",
            Ward::Cardiology => "cardiology",
            Ward::Neurology => "neurology",
            Ward::Other => "other",
            Ward::TotalAllWards => "total",
        }
    }

    pub fn is_aggregate(self) -> bool {
        self == Ward::TotalAllWards
    }
}

impl fmt::Display for Ward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Complexity {
    Major,
    /// Intermediate and minor complexity merged.
    Other,
    /// Major + Other; derived, never ingested.
    All,
}

impl Complexity {
    pub const BASE: [Complexity; 2] = [Complexity::Major, Complexity::Other];
    pub const ALL: [Complexity; 3] = [Complexity::Major, Complexity::Other, Complexity::All];

    pub fn label(self) -> &'static str {
        match self {
            Complexity::Major => "Major",
            Complexity::Other => "Other",
            Complexity::All => "All",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Complexity::Major => "major",
            Complexity::Other => "other",
            Complexity::All => "all",
        }
    }

    pub fn is_aggregate(self) -> bool {
        self == Complexity::All
    }
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub ward: Ward,
    pub complexity: Complexity,
}

impl SeriesKey {
    pub const fn new(ward: Ward, complexity: Complexity) -> Self {
        Self { ward, complexity }
    }

    /// The total-arrivals series (all wards, all complexities).
    pub const TOTAL: SeriesKey = SeriesKey::new(Ward::TotalAllWards, Complexity::All);

    pub fn is_aggregate(self) -> bool {
        self.ward.is_aggregate() || self.complexity.is_aggregate()
    }

    /// The 16 directly observed keys.
    pub fn base_keys() -> impl Iterator<Item = SeriesKey> {
        Ward::BASE.into_iter().flat_map(|w| Complexity::BASE.into_iter().map(move |c| SeriesKey::new(w, c)))
    }

    /// All 27 keys: base series plus the 11 aggregates.
    pub fn all_keys() -> impl Iterator<Item = SeriesKey> {
        Ward::ALL.into_iter().flat_map(|w| Complexity::ALL.into_iter().map(move |c| SeriesKey::new(w, c)))
    }

    /// `<ward>_<complexity>`, the canonical file stem.
    pub fn slug(self) -> String {
        format!("{}_{}", self.ward.slug(), self.complexity.slug())
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::all_keys().find(|k| k.slug() == s)
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.ward, self.complexity)
    }
}

/// Case-insensitive label resolution for ward and complexity names.
///
/// Keys are stored normalised (trimmed, lower-case, runs of whitespace,
/// `-` and `_` collapsed to one space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasTable {
    pub wards: BTreeMap<String, Ward>,
    pub complexities: BTreeMap<String, Complexity>,
}

pub fn normalize_label(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.trim().chars() {
        if ch.is_whitespace() || ch == '_' || ch == '-' {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(ch.to_lowercase());
    }
    out
}

impl Default for AliasTable {
    fn default() -> Self {
        let mut wards = BTreeMap::new();
        let ward_aliases: [(&str, Ward); 22] = [
            ("emergency medicine", Ward::EmergencyMedicine),
            ("emergency", Ward::EmergencyMedicine),
            ("ed", Ward::EmergencyMedicine),
            ("general medicine", Ward::GeneralMedicine),
            ("gen med", Ward::GeneralMedicine),
            ("medicine", Ward::GeneralMedicine),
            ("surgery", Ward::Surgery),
            ("surgical", Ward::Surgery),
            ("paediatric", Ward::Paediatric),
            ("paediatrics", Ward::Paediatric),
            ("pediatric", Ward::Paediatric),
            ("pediatrics", Ward::Paediatric),
            ("psychiatry", Ward::Psychiatry),
            ("mental health", Ward::Psychiatry),
            ("cardiology", Ward::Cardiology),
            ("neurology", Ward::Neurology),
            ("other", Ward::Other),
            ("total", Ward::TotalAllWards),
            ("total arrivals", Ward::TotalAllWards),
            ("total all wards", Ward::TotalAllWards),
            ("totalallwards", Ward::TotalAllWards),
            ("all wards", Ward::TotalAllWards),
        ];
        for (k, w) in ward_aliases {
            wards.insert(k.to_string(), w);
        }
        let mut complexities = BTreeMap::new();
        let cx_aliases: [(&str, Complexity); 7] = [
            ("major", Complexity::Major),
            ("other", Complexity::Other),
            ("intermediate", Complexity::Other),
            ("minor", Complexity::Other),
            ("all", Complexity::All),
            ("total", Complexity::All),
            ("any", Complexity::All),
        ];
        for (k, c) in cx_aliases {
            complexities.insert(k.to_string(), c);
        }
        Self { wards, complexities }
    }
}

impl AliasTable {
    pub fn ward(&self, raw: &str) -> Result<Ward> {
        self.wards.get(&normalize_label(raw)).copied().ok_or_else(|| Error::UnknownLabel {
            kind: "ward",
            label: raw.to_string(),
            valid: join_keys(self.wards.keys()),
        })
    }

    pub fn complexity(&self, raw: &str) -> Result<Complexity> {
        self.complexities.get(&normalize_label(raw)).copied().ok_or_else(|| Error::UnknownLabel {
            kind: "complexity",
            label: raw.to_string(),
            valid: join_keys(self.complexities.keys()),
        })
    }

    pub fn add_ward_alias(&mut self, alias: &str, ward: Ward) {
        self.wards.insert(normalize_label(alias), ward);
    }

    pub fn add_complexity_alias(&mut self, alias: &str, complexity: Complexity) {
        self.complexities.insert(normalize_label(alias), complexity);
    }
}

fn join_keys<'a>(keys: impl Iterator<Item = &'a String>) -> String {
    let v: Vec<&str> = keys.map(String::as_str).collect();
    v.join(", ")
}

/// Consecutive daily admission counts for one series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailySeries {
    pub key: SeriesKey,
    pub start: CalendarDate,
    pub counts: Vec<u32>,
    pub anomaly_window: Option<DateRange>,
}

impl DailySeries {
    pub fn new(key: SeriesKey, start: CalendarDate, counts: Vec<u32>, anomaly_window: Option<DateRange>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::data(format!("series {key} has no observations")));
        }
        let s = Self { key, start, counts, anomaly_window: None };
        if let Some(w) = anomaly_window {
            s.check_window(w)?;
        }
        Ok(Self { anomaly_window, ..s })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn end(&self) -> CalendarDate {
        self.start.add_days(self.counts.len() as i64 - 1)
    }

    pub fn range(&self) -> DateRange {
        DateRange { start: self.start, end: self.end() }
    }

    pub fn date_at(&self, index: usize) -> CalendarDate {
        self.start.add_days(index as i64)
    }

    pub fn index_of(&self, date: CalendarDate) -> Option<usize> {
        let i = self.start.days_until(date);
        (i >= 0 && (i as usize) < self.counts.len()).then_some(i as usize)
    }

    pub fn get(&self, date: CalendarDate) -> Option<u32> {
        self.index_of(date).map(|i| self.counts[i])
    }

    pub fn dates(&self) -> impl Iterator<Item = CalendarDate> + '_ {
        (0..self.counts.len()).map(|i| self.date_at(i))
    }

    fn check_window(&self, w: DateRange) -> Result<()> {
        if w.start < self.start || w.end > self.end() {
            return Err(Error::OutOfRange { from: w.start, to: w.end, start: self.start, end: self.end() });
        }
        Ok(())
    }

    pub fn with_anomaly_window(mut self, window: Option<DateRange>) -> Result<Self> {
        if let Some(w) = window {
            self.check_window(w)?;
        }
        self.anomaly_window = window;
        Ok(self)
    }

    /// Whether `index` falls inside the anomaly window.
    pub fn is_anomalous(&self, index: usize) -> bool {
        self.anomaly_window.is_some_and(|w| w.contains(self.date_at(index)))
    }

    /// Sub-series over the inclusive range `[from, to]`. The anomaly window is
    /// clipped to the new range and dropped if it no longer overlaps.
    pub fn slice(&self, from: CalendarDate, to: CalendarDate) -> Result<DailySeries> {
        let out_of_range = || Error::OutOfRange { from, to, start: self.start, end: self.end() };
        if to < from {
            return Err(out_of_range());
        }
        let a = self.index_of(from).ok_or_else(out_of_range)?;
        let b = self.index_of(to).ok_or_else(out_of_range)?;
        let anomaly_window = self.anomaly_window.and_then(|w| {
            let s = w.start.max(from);
            let e = w.end.min(to);
            (s <= e).then_some(DateRange { start: s, end: e })
        });
        Ok(DailySeries { key: self.key, start: from, counts: self.counts[a..=b].to_vec(), anomaly_window })
    }

    pub fn mean(&self) -> f64 {
        self.counts.iter().map(|&c| f64::from(c)).sum::<f64>() / self.counts.len() as f64
    }
}

/// Free-function form of [`DailySeries::slice`].
pub fn slice(series: &DailySeries, from: CalendarDate, to: CalendarDate) -> Result<DailySeries> {
    series.slice(from, to)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateRecord {
    pub date: CalendarDate,
    /// Daily maximum temperature, °C.
    pub tmax: f64,
    /// Daily minimum temperature, °C.
    pub tmin: f64,
    /// Mean wind speed, m/s.
    pub wind_mean: f64,
    /// Total precipitation, mm.
    pub precip_total: f64,
    pub is_holiday: bool,
}

/// Per-date weather summaries and holiday flags over a gap-free date range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    records: Vec<CovariateRecord>,
}

impl CovariateTable {
    /// Validates and sorts the records. Duplicate dates, gaps, `tmax < tmin`,
    /// negative precipitation and non-finite values are rejected.
    pub fn from_records(mut records: Vec<CovariateRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::data("no covariate rows"));
        }
        for r in &records {
            if !(r.tmax.is_finite() && r.tmin.is_finite() && r.wind_mean.is_finite() && r.precip_total.is_finite()) {
                return Err(Error::NonFinite(format!("covariates at {}", r.date)));
            }
            if r.tmax < r.tmin {
                return Err(Error::data(format!("tmax < tmin at {}", r.date)));
            }
            if r.precip_total < 0.0 {
                return Err(Error::data(format!("negative precipitation at {}", r.date)));
            }
        }
        records.sort_by_key(|r| r.date);
        let mut missing = Vec::new();
        for pair in records.windows(2) {
            let gap = pair[0].date.days_until(pair[1].date);
            if gap == 0 {
                return Err(Error::data(format!("duplicate covariate date {}", pair[0].date)));
            }
            for k in 1..gap {
                missing.push(pair[0].date.add_days(k));
            }
        }
        if !missing.is_empty() {
            let shown: Vec<String> = missing.iter().take(20).map(ToString::to_string).collect();
            let more = if missing.len() > 20 { format!(" (+{} more)", missing.len() - 20) } else { String::new() };
            return Err(Error::data(format!("covariate dates missing: {}{more}", shown.join(", "))));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[CovariateRecord] {
        &self.records
    }

    pub fn start(&self) -> CalendarDate {
        self.records[0].date
    }

    pub fn end(&self) -> CalendarDate {
        self.records[self.records.len() - 1].date
    }

    pub fn get(&self, date: CalendarDate) -> Option<&CovariateRecord> {
        let i = self.start().days_until(date);
        if i < 0 {
            return None;
        }
        self.records.get(i as usize)
    }

    pub fn covers(&self, range: DateRange) -> bool {
        self.start() <= range.start && range.end <= self.end()
    }

    /// Records aligned with `range`, or an error naming the first uncovered date.
    pub fn aligned(&self, range: DateRange) -> Result<&[CovariateRecord]> {
        if !self.covers(range) {
            let missing = if range.start < self.start() { range.start } else { self.end().succ() };
            return Err(Error::data(format!(
                "covariates ({}..={}) do not cover {range}; first missing date {missing}",
                self.start(),
                self.end()
            )));
        }
        let a = self.start().days_until(range.start) as usize;
        Ok(&self.records[a..a + range.len()])
    }
}

/// All series of one study plus optional covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub series: BTreeMap<SeriesKey, DailySeries>,
    pub covariates: Option<CovariateTable>,
}

impl Dataset {
    /// Builds a dataset from the 16 base series, deriving the 11 aggregates.
    /// Base series must share one date range; missing base keys are treated as
    /// all-zero series.
    pub fn from_base(base: Vec<DailySeries>, covariates: Option<CovariateTable>) -> Result<Self> {
        let first = base.first().ok_or_else(|| Error::data("no rows"))?;
        let (start, len) = (first.start, first.len());
        let window = first.anomaly_window;
        let mut series = BTreeMap::new();
        for s in base {
            if s.key.is_aggregate() {
                return Err(Error::data(format!("aggregate series {} cannot be supplied directly", s.key)));
            }
            if s.start != start || s.len() != len {
                return Err(Error::data(format!(
                    "series {} covers {} but expected {}..={}",
                    s.key,
                    s.range(),
                    start,
                    start.add_days(len as i64 - 1)
                )));
            }
            if series.insert(s.key, s).is_some() {
                return Err(Error::data("duplicate series key"));
            }
        }
        for key in SeriesKey::base_keys() {
            series.entry(key).or_insert_with(|| DailySeries { key, start, counts: alloc::vec![0; len], anomaly_window: window });
        }
        let mut ds = Self { series, covariates };
        ds.rederive_aggregates();
        if let Some(cov) = &ds.covariates {
            cov.aligned(ds.range())?;
        }
        Ok(ds)
    }

    pub fn range(&self) -> DateRange {
        self.series.values().next().expect("dataset has series").range()
    }

    pub fn start(&self) -> CalendarDate {
        self.range().start
    }

    pub fn len(&self) -> usize {
        self.range().len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn get(&self, key: SeriesKey) -> Option<&DailySeries> {
        self.series.get(&key)
    }

    /// Recomputes every aggregate series from the base series. The anomaly
    /// window of an aggregate is taken from its first component.
    pub fn rederive_aggregates(&mut self) {
        let first = self.series.values().next().expect("dataset has series");
        let (start, len) = (first.start, first.len());
        let sum_of = |series: &BTreeMap<SeriesKey, DailySeries>, keys: &[SeriesKey]| {
            let mut acc = alloc::vec![0u32; len];
            for k in keys {
                for (a, c) in acc.iter_mut().zip(&series[k].counts) {
                    *a += c;
                }
            }
            (acc, series[&keys[0]].anomaly_window)
        };
        for w in Ward::BASE {
            let parts = [SeriesKey::new(w, Complexity::Major), SeriesKey::new(w, Complexity::Other)];
            let (counts, anomaly_window) = sum_of(&self.series, &parts);
            let key = SeriesKey::new(w, Complexity::All);
            self.series.insert(key, DailySeries { key, start, counts, anomaly_window });
        }
        for c in Complexity::ALL {
            let parts: Vec<SeriesKey> = Ward::BASE.iter().map(|&w| SeriesKey::new(w, c)).collect();
            let (counts, anomaly_window) = sum_of(&self.series, &parts);
            let key = SeriesKey::new(Ward::TotalAllWards, c);
            self.series.insert(key, DailySeries { key, start, counts, anomaly_window });
        }
    }

    /// Checks both aggregation identities elementwise over every date.
    pub fn check_aggregation(&self) -> Result<()> {
        let range = self.range();
        for s in self.series.values() {
            if s.range() != range {
                return Err(Error::data(format!("series {} has range {}, expected {range}", s.key, s.range())));
            }
        }
        let get = |k: SeriesKey| self.series.get(&k).ok_or_else(|| Error::data(format!("missing series {k}")));
        for w in Ward::BASE {
            let (m, o, a) = (
                get(SeriesKey::new(w, Complexity::Major))?,
                get(SeriesKey::new(w, Complexity::Other))?,
                get(SeriesKey::new(w, Complexity::All))?,
            );
            for i in 0..a.len() {
                if a.counts[i] != m.counts[i] + o.counts[i] {
                    return Err(Error::data(format!("{w}: All != Major + Other at {}", a.date_at(i))));
                }
            }
        }
        for c in Complexity::ALL {
            let total = get(SeriesKey::new(Ward::TotalAllWards, c))?;
            for i in 0..total.len() {
                let mut s = 0u32;
                for w in Ward::BASE {
                    s += get(SeriesKey::new(w, c))?.counts[i];
                }
                if total.counts[i] != s {
                    return Err(Error::data(format!("Total/{c}: sum over wards differs at {}", total.date_at(i))));
                }
            }
        }
        Ok(())
    }

    /// Sets the anomaly window on every series.
    pub fn set_anomaly_window(&mut self, window: Option<DateRange>) -> Result<()> {
        for s in self.series.values_mut() {
            if let Some(w) = window {
                s.check_window(w)?;
            }
            s.anomaly_window = window;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn series(key: SeriesKey, counts: Vec<u32>) -> DailySeries {
        DailySeries::new(key, CalendarDate::ymd(2017, 1, 1), counts, None).unwrap()
    }

    #[test]
    fn labels_are_case_insensitive() {
        let t = AliasTable::default();
        assert_eq!(t.ward("  Emergency_Medicine ").unwrap(), Ward::EmergencyMedicine);
        assert_eq!(t.ward("PAEDIATRICS").unwrap(), Ward::Paediatric);
        assert_eq!(t.complexity("Minor").unwrap(), Complexity::Other);
        match t.ward("Dermatology") {
            Err(Error::UnknownLabel { valid, .. }) => assert!(valid.contains("surgery")),
            other => panic!("expected unknown label, got {other:?}"),
        }
    }

    #[test]
    fn slug_round_trip() {
        assert_eq!(SeriesKey::all_keys().count(), 27);
        assert_eq!(SeriesKey::base_keys().count(), 16);
        for k in SeriesKey::all_keys() {
            assert_eq!(SeriesKey::from_slug(&k.slug()), Some(k));
        }
    }

    #[test]
    fn slice_edges() {
        let s = series(SeriesKey::new(Ward::Surgery, Complexity::Major), (0..1826).collect());
        assert_eq!(s.slice(s.start, s.end()).unwrap(), s);
        let one = s.slice(s.date_at(5), s.date_at(5)).unwrap();
        assert_eq!(one.counts, vec![5]);
        let tail = s.slice(s.date_at(1826 - 180), s.end()).unwrap();
        assert_eq!(tail.len(), 180);
        assert_eq!(tail.key, s.key);
        assert!(s.slice(s.start.add_days(-1), s.end()).is_err());
        assert!(s.slice(s.start, s.end().succ()).is_err());
    }

    #[test]
    fn aggregates_follow_identities() {
        let base: Vec<DailySeries> = SeriesKey::base_keys().enumerate().map(|(i, k)| series(k, vec![i as u32, 2 * i as u32, 1])).collect();
        let ds = Dataset::from_base(base, None).unwrap();
        assert_eq!(ds.series.len(), 27);
        ds.check_aggregation().unwrap();
        let surgery = ds.get(SeriesKey::new(Ward::Surgery, Complexity::All)).unwrap();
        // Surgery is the third ward: base indices 4 and 5.
        assert_eq!(surgery.counts, vec![9, 18, 2]);
    }

    #[test]
    fn broken_identity_is_detected() {
        let base: Vec<DailySeries> = SeriesKey::base_keys().map(|k| series(k, vec![1, 1])).collect();
        let mut ds = Dataset::from_base(base, None).unwrap();
        ds.series.get_mut(&SeriesKey::new(Ward::Neurology, Complexity::Major)).unwrap().counts[1] = 3;
        assert!(ds.check_aggregation().is_err());
        ds.rederive_aggregates();
        ds.check_aggregation().unwrap();
    }

    #[test]
    fn covariate_validation() {
        let rec = |d: u8, tmax: f64, tmin: f64| CovariateRecord {
            date: CalendarDate::ymd(2017, 6, d),
            tmax,
            tmin,
            wind_mean: 3.0,
            precip_total: 0.0,
            is_holiday: false,
        };
        let err = CovariateTable::from_records(vec![rec(1, 10.0, 12.0)]).unwrap_err();
        assert_eq!(err.to_string(), "data error: tmax < tmin at 2017-06-01");
        assert!(CovariateTable::from_records(vec![rec(1, 12.0, 2.0), rec(1, 12.0, 2.0)]).is_err());
        let gap = CovariateTable::from_records(vec![rec(1, 12.0, 2.0), rec(4, 12.0, 2.0)]).unwrap_err();
        assert!(gap.to_string().contains("2017-06-02, 2017-06-03"));
        let ok = CovariateTable::from_records(vec![rec(2, 12.0, 2.0), rec(1, 12.0, 2.0)]).unwrap();
        assert_eq!(ok.start(), CalendarDate::ymd(2017, 6, 1));
        assert!(ok.get(CalendarDate::ymd(2017, 6, 2)).is_some());
        assert!(ok.get(CalendarDate::ymd(2017, 6, 3)).is_none());
    }

    proptest! {
        #[test]
        fn slice_composes(n in 1usize..200, a in 0usize..200, b in 0usize..200, c in 0usize..200, d in 0usize..200) {
            let s = series(SeriesKey::new(Ward::Other, Complexity::Other), (0..n as u32).collect());
            let mut idx = [a % n, b % n, c % n, d % n];
            idx.sort_unstable();
            let [o0, i0, i1, o1] = idx;
            let outer = s.slice(s.date_at(o0), s.date_at(o1)).unwrap();
            let nested = outer.slice(s.date_at(i0), s.date_at(i1)).unwrap();
            prop_assert_eq!(nested, s.slice(s.date_at(i0), s.date_at(i1)).unwrap());
        }
    }
}
