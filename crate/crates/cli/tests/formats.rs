use std::path::Path;

use proptest::prelude::*;
use wardcast::error::CliError;
use wardcast::io;
use wardcast_core::calendar::CalendarDate;
use wardcast_core::dataset::{AliasTable, Complexity, SeriesKey, Ward};
use wardcast_core::eval::{ForecastRecord, ModelKind};
use wardcast_core::explain::{Waterfall, WaterfallStep};
use wardcast_core::synthgen::{self, GeneratorConfig};

fn admissions(text: &str) -> Result<io::Admissions, CliError> {
    io::parse_admissions(Path::new("adm.csv"), text.as_bytes(), &AliasTable::default())
}

#[test]
fn unit_rows_are_counted() {
    let a = admissions("date,ward,complexity\n2020-01-01,Surgery,Major\n2020-01-01,Surgery,Major\n2020-01-01,Surgery,Major\n").unwrap();
    let s = &a.dataset.series[&SeriesKey::new(Ward::Surgery, Complexity::Major)];
    assert_eq!(s.counts, vec![3]);
    assert!(a.rejected.is_empty());
}

#[test]
fn complexity_total_sums_components() {
    let a = admissions("date,ward,complexity,count\n2020-01-01,Surgery,Major,2\n2020-01-01,Surgery,Other,5\n").unwrap();
    assert_eq!(a.dataset.series[&SeriesKey::new(Ward::Surgery, Complexity::All)].counts, vec![7]);
    assert_eq!(a.dataset.series[&SeriesKey::TOTAL].counts, vec![7]);
}

#[test]
fn missing_days_are_zero_and_bad_rows_are_reported() {
    let text = "date,ward,complexity,count\n2020-01-01,Neurology,Major,1\n2020-13-01,Neurology,Major,1\n2020-01-03,Neurology,Major,x\n2020-01-04,Neurology,Major,2\n";
    let a = admissions(text).unwrap();
    let s = &a.dataset.series[&SeriesKey::new(Ward::Neurology, Complexity::Major)];
    assert_eq!(s.counts, vec![1, 0, 0, 2]);
    let lines: Vec<u64> = a.rejected.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![3, 4]);
}

#[test]
fn unknown_ward_lists_valid_labels() {
    let err = admissions("date,ward,complexity\n2020-01-01,Dermatology,Major\n").unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let msg = err.to_string();
    assert!(msg.contains("adm.csv:2"), "{msg}");
    assert!(msg.contains("surgery"), "{msg}");
}

#[test]
fn empty_log_and_aggregate_rows_are_errors() {
    assert!(admissions("date,ward,complexity\n").unwrap_err().to_string().contains("no rows"));
    let err = admissions("date,ward,complexity\n2020-01-01,Surgery,All\n").unwrap_err();
    assert!(err.to_string().contains("derived"), "{err}");
}

fn covariates(text: &str) -> Result<wardcast_core::dataset::CovariateTable, CliError> {
    io::parse_covariates(Path::new("cov.csv"), text.as_bytes())
}

const COV_HEADER: &str = "date,tmax_c,tmin_c,wind_ms,precip_mm,is_holiday\n";

#[test]
fn covariate_validation_names_the_problem() {
    let ok = covariates(&format!("{COV_HEADER}2020-01-01,25,15,3,0,1\n2020-01-02,24,14,2,1.5,false\n")).unwrap();
    assert_eq!(ok.records().len(), 2);
    assert!(ok.records()[0].is_holiday);

    let dup = covariates(&format!("{COV_HEADER}2020-01-01,25,15,3,0,0\n2020-01-01,25,15,3,0,0\n")).unwrap_err();
    assert!(dup.to_string().contains("2020-01-01"), "{dup}");

    let swapped = covariates(&format!("{COV_HEADER}2020-01-01,10,15,3,0,0\n")).unwrap_err();
    assert!(swapped.to_string().contains("2020-01-01"), "{swapped}");

    let gap = covariates(&format!("{COV_HEADER}2020-01-01,25,15,3,0,0\n2020-01-03,25,15,3,0,0\n"));
    assert!(gap.is_err());

    let flag = covariates(&format!("{COV_HEADER}2020-01-01,25,15,3,0,yes\n")).unwrap_err();
    assert!(flag.to_string().contains("cov.csv:2"), "{flag}");
}

#[test]
fn canonical_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GeneratorConfig { n_days: 120, anomaly: None, ..GeneratorConfig::default() };
    let data = synthgen::generate(&cfg).unwrap().dataset;
    io::write_dataset(dir.path(), &data).unwrap();
    let back = io::read_dataset(dir.path()).unwrap();
    assert_eq!(back, data);
}

#[test]
fn tampered_aggregate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GeneratorConfig { n_days: 60, anomaly: None, ..GeneratorConfig::default() };
    let data = synthgen::generate(&cfg).unwrap().dataset;
    io::write_dataset(dir.path(), &data).unwrap();
    let mut total = data.series[&SeriesKey::TOTAL].clone();
    total.counts[5] += 1;
    io::write_series(&io::series_path(dir.path(), SeriesKey::TOTAL), &total).unwrap();
    let err = io::read_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().contains("sum of its components"), "{err}");
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = io::read_dataset(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn empty_waterfall_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.csv");
    let w = Waterfall { base: 50.25, steps: Vec::new(), remainder: None, prediction: 50.25 };
    io::write_waterfall(&p, &w).unwrap();
    assert_eq!(io::read_waterfall(&p).unwrap(), w);
}

fn record() -> impl Strategy<Value = ForecastRecord> {
    let keys: Vec<SeriesKey> = SeriesKey::all_keys().collect();
    (prop::sample::select(keys), prop::sample::select(ModelKind::ALL.to_vec()), 0u64..1000, 0i64..3000, 1u8..=7, 0u32..200, -1e6f64..1e6)
        .prop_map(|(key, model, seed, day, h, y, y_hat)| ForecastRecord {
            key,
            model,
            seed,
            origin: CalendarDate::ymd(2017, 1, 1).add_days(day),
            h,
            y_true: f64::from(y),
            y_hat,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn records_round_trip_exactly(records in prop::collection::vec(record(), 0..40)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("records.csv");
        io::write_records(&p, &records).unwrap();
        prop_assert_eq!(io::read_records(&p).unwrap(), records);
    }

    #[test]
    fn waterfall_round_trips_exactly(
        base in -1e3f64..1e3,
        contribs in prop::collection::vec(-50f64..50.0, 0..12),
        remainder in prop::option::of(-10f64..10.0),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        let steps: Vec<WaterfallStep> = contribs
            .iter()
            .enumerate()
            .map(|(i, &c)| WaterfallStep { feature: format!("lag_{i}@t-{i}"), contribution: c })
            .collect();
        let prediction = base + contribs.iter().sum::<f64>() + remainder.unwrap_or(0.0);
        let w = Waterfall { base, steps, remainder, prediction };
        io::write_waterfall(&p, &w).unwrap();
        prop_assert_eq!(io::read_waterfall(&p).unwrap(), w);
    }
}

#[test]
fn series_keys_parse_from_slugs() {
    assert_eq!(io::parse_series_key("total").unwrap(), SeriesKey::TOTAL);
    for key in SeriesKey::all_keys() {
        assert_eq!(io::parse_series_key(&key.slug()).unwrap(), key);
    }
    let err = io::parse_series_key("surgery_minor").unwrap_err();
    assert!(err.contains("surgery_major"), "{err}");
}
