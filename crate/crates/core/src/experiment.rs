//! The benchmark protocol: per series, build features, hold out the final
//! test days, train each forecaster and log one record per test origin and
//! horizon.
//!
//! Work is split into pure jobs keyed by (series, model, seed) so a caller
//! can schedule them in any order and merge the sorted results.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Complexity, Dataset, SeriesKey, Ward};
use crate::error::{Error, Result};
use crate::eval::{build_report, seasonal_naive, Failure, ForecastRecord, MetricsReport, ModelKind};
use crate::features::{build_frame, chronological_split, make_windows, FeatureConfig, FeatureFrame, WindowSample, SARIMAX_EXOGENOUS};
use crate::gbt::{GbtConfig, MultistepGbt};
use crate::linalg::Mat;
use crate::lstm::{self, LstmConfig, LstmModel};
use crate::sarimax::{self, FitOptions, ForecastMode, SarimaxFit, SarimaxOrder};
use crate::HORIZON;

/// Series of the results tables: every ward row (including the all-ward
/// total) for the major and other complexity views, then total arrivals.
pub fn table_keys() -> Vec<SeriesKey> {
    let mut keys: Vec<SeriesKey> =
        Complexity::BASE.into_iter().flat_map(|c| Ward::ALL.into_iter().map(move |w| SeriesKey::new(w, c))).collect();
    keys.push(SeriesKey::TOTAL);
    keys
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub series: Vec<SeriesKey>,
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    pub test_days: usize,
    pub features: FeatureConfig,
    pub gbt: GbtConfig,
    pub lstm: LstmConfig,
    pub sarimax_order: SarimaxOrder,
    pub sarimax_fit: FitOptions,
    pub sarimax_mode: ForecastMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            series: table_keys(),
            models: ModelKind::ALL.to_vec(),
            seeds: (1..=10).collect(),
            test_days: 180,
            features: FeatureConfig::default(),
            gbt: GbtConfig::default(),
            lstm: LstmConfig::default(),
            sarimax_order: SarimaxOrder::WEEKLY_DEFAULT,
            sarimax_fit: FitOptions::default(),
            sarimax_mode: ForecastMode::MultiStep,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() || self.models.is_empty() {
            return Err(Error::config("experiment needs at least one series and one model"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("experiment needs at least one seed"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::config("duplicate seeds"));
        }
        if self.test_days < HORIZON {
            return Err(Error::config(format!("test_days = {} is shorter than the horizon", self.test_days)));
        }
        self.gbt.validate()?;
        self.lstm.validate()
    }
}

/// Frames and windows of one series, shared by all of its jobs.
#[derive(Debug, Clone)]
pub struct PreparedSeries {
    pub key: SeriesKey,
    pub frame: FeatureFrame,
    /// Regressors for the seasonal ARIMA model, aligned with `frame`.
    pub exog: Mat,
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    /// Frame index of each test origin.
    pub test_origins: Vec<usize>,
    /// Number of leading frame rows available for fitting.
    pub fit_rows: usize,
}

pub fn prepare(dataset: &Dataset, key: SeriesKey, cfg: &ExperimentConfig) -> Result<PreparedSeries> {
    let series = dataset.get(key).ok_or_else(|| Error::data(format!("dataset has no series {key}")))?;
    let covariates = dataset.covariates.as_ref().ok_or_else(|| Error::data("dataset has no covariates"))?;
    let frame = build_frame(series, covariates, true, &cfg.features)?;
    let exog = frame.select(&SARIMAX_EXOGENOUS)?;
    let windows = make_windows(&frame);
    let (train, test) = chronological_split(&windows, cfg.test_days)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::insufficient(format!("{key}: empty train or test partition")));
    }
    let test_origins = test
        .iter()
        .map(|s| frame.index_of(s.origin).ok_or_else(|| Error::data("test origin outside frame")))
        .collect::<Result<Vec<usize>>>()?;
    let fit_rows = frame.len() - cfg.test_days;
    Ok(PreparedSeries { key, frame, exog, train, test, test_origins, fit_rows })
}

/// A trained forecaster of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Sarimax(SarimaxFit),
    Gbt(MultistepGbt),
    Lstm(LstmModel),
    SeasonalNaive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub key: SeriesKey,
    pub seed: u64,
    /// Per-day input columns the model was trained on.
    pub feature_names: Vec<String>,
    pub body: ModelBody,
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self.body {
            ModelBody::Sarimax(_) => ModelKind::Sarimax,
            ModelBody::Gbt(_) => ModelKind::Gbt,
            ModelBody::Lstm(_) => ModelKind::Lstm,
            ModelBody::SeasonalNaive => ModelKind::SeasonalNaive,
        }
    }
}

/// One unit of work. Deterministic models carry seed 0 and are trained once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Job {
    pub key: SeriesKey,
    pub model: ModelKind,
    pub seed: u64,
}

pub fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for &key in &cfg.series {
        for &model in &cfg.models {
            if model == ModelKind::Lstm {
                out.extend(cfg.seeds.iter().map(|&seed| Job { key, model, seed }));
            } else {
                out.push(Job { key, model, seed: 0 });
            }
        }
    }
    out.sort();
    out
}

pub fn train_model(prep: &PreparedSeries, model: ModelKind, seed: u64, cfg: &ExperimentConfig) -> Result<FittedModel> {
    let (feature_names, body) = match model {
        ModelKind::Sarimax => {
            let y = &prep.frame.target[..prep.fit_rows];
            let x = Mat::from_vec(prep.fit_rows, prep.exog.cols, prep.exog.data[..prep.fit_rows * prep.exog.cols].to_vec());
            let mut fit = sarimax::fit(y, &x, cfg.sarimax_order, &cfg.sarimax_fit)?;
            fit.exog_names = exog_names(&fit);
            (SARIMAX_EXOGENOUS.iter().map(|s| s.to_string()).collect(), ModelBody::Sarimax(fit))
        }
        ModelKind::Gbt => {
            let gbt = MultistepGbt::fit(&prep.train, &prep.frame.names, &GbtConfig { seed, ..cfg.gbt.clone() })?;
            (prep.frame.names.clone(), ModelBody::Gbt(gbt))
        }
        ModelKind::Lstm => {
            let m = lstm::train(&prep.train, &LstmConfig { seed, ..cfg.lstm.clone() })?;
            (prep.frame.names.clone(), ModelBody::Lstm(m))
        }
        ModelKind::SeasonalNaive => (Vec::new(), ModelBody::SeasonalNaive),
    };
    Ok(FittedModel { key: prep.key, seed, feature_names, body })
}

fn exog_names(fit: &SarimaxFit) -> Vec<String> {
    let mut names: Vec<String> = SARIMAX_EXOGENOUS.iter().map(|s| s.to_string()).collect();
    if fit.intercept {
        names.push("const".into());
    }
    names
}

/// Forecasts every test origin of `prep`, returning the seven horizons of
/// each.
pub fn forecast_test(prep: &PreparedSeries, model: &FittedModel, mode: ForecastMode) -> Result<Vec<[f64; HORIZON]>> {
    if model.key != prep.key {
        return Err(Error::data(format!("model trained for {} applied to {}", model.key, prep.key)));
    }
    let expect_names = |names: &[String]| -> Result<()> {
        if model.feature_names.as_slice() != names {
            return Err(Error::model("model feature manifest differs from the frame columns"));
        }
        Ok(())
    };
    match &model.body {
        ModelBody::Sarimax(fit) => {
            let names: Vec<String> = SARIMAX_EXOGENOUS.iter().map(|s| s.to_string()).collect();
            expect_names(&names)?;
            let paths = fit.forecast_origins(&prep.frame.target, &prep.exog, &prep.test_origins, HORIZON, mode)?;
            Ok(paths.into_iter().map(|p| core::array::from_fn(|h| p[h])).collect())
        }
        ModelBody::Gbt(g) => {
            expect_names(&prep.frame.names)?;
            prep.test.iter().map(|s| g.predict(s)).collect()
        }
        ModelBody::Lstm(m) => {
            expect_names(&prep.frame.names)?;
            m.predict_many(&prep.test)
        }
        ModelBody::SeasonalNaive => prep.test_origins.iter().map(|&o| seasonal_naive(&prep.frame.target, o)).collect(),
    }
}

/// Record log of one trained model over the test origins, one record set
/// per entry of `seeds`.
pub fn records_for(prep: &PreparedSeries, model: ModelKind, seeds: &[u64], forecasts: &[[f64; HORIZON]]) -> Vec<ForecastRecord> {
    let mut out = Vec::with_capacity(seeds.len() * forecasts.len() * HORIZON);
    for &seed in seeds {
        for (sample, f) in prep.test.iter().zip(forecasts) {
            for h in 0..HORIZON {
                out.push(ForecastRecord {
                    key: prep.key,
                    model,
                    seed,
                    origin: sample.origin,
                    h: (h + 1) as u8,
                    y_true: sample.y[h],
                    y_hat: f[h],
                });
            }
        }
    }
    out
}

/// Seeds a job's records are reported under. The gradient-boosted model is
/// deterministic, so its single fit stands for every seed of the protocol.
pub fn report_seeds(job: &Job, cfg: &ExperimentConfig) -> Vec<u64> {
    match job.model {
        ModelKind::Gbt => cfg.seeds.clone(),
        _ => vec![job.seed],
    }
}

/// Result of one job: its records, or the failure that replaced them.
pub fn run_job(prep: &PreparedSeries, job: &Job, cfg: &ExperimentConfig) -> core::result::Result<Vec<ForecastRecord>, Failure> {
    let outcome = train_model(prep, job.model, job.seed, cfg).and_then(|m| forecast_test(prep, &m, cfg.sarimax_mode));
    match outcome {
        Ok(f) => Ok(records_for(prep, job.model, &report_seeds(job, cfg), &f)),
        Err(e) => Err(Failure { key: job.key, model: job.model, seed: job.model.is_seeded().then_some(job.seed), message: e.to_string() }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub records: Vec<ForecastRecord>,
    pub report: MetricsReport,
}

/// Merges job outcomes into a sorted record log and its report.
pub fn collect(outcomes: Vec<core::result::Result<Vec<ForecastRecord>, Failure>>) -> ExperimentOutput {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.extend(r),
            Err(f) => failures.push(f),
        }
    }
    sort_records(&mut records);
    let report = build_report(&records, failures);
    ExperimentOutput { records, report }
}

pub fn sort_records(records: &mut [ForecastRecord]) {
    records.sort_by_key(|a| (a.key, a.model, a.seed, a.origin, a.h));
}

/// Runs the full protocol. Series that cannot be prepared fail every one of
/// their jobs; the rest continue.
pub fn run_experiment(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let all = jobs(cfg);
    let mut prepared = Vec::new();
    for &key in &cfg.series {
        prepared.push((key, prepare(dataset, key, cfg)));
    }
    let run = |job: &Job| -> core::result::Result<Vec<ForecastRecord>, Failure> {
        let (_, prep) = prepared.iter().find(|(k, _)| *k == job.key).expect("job series prepared");
        match prep {
            Ok(p) => run_job(p, job, cfg),
            Err(e) => {
                Err(Failure { key: job.key, model: job.model, seed: job.model.is_seeded().then_some(job.seed), message: e.to_string() })
            }
        }
    };
    #[cfg(feature = "parallel")]
    let outcomes: Vec<_> = {
        use rayon::prelude::*;
        all.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<_> = all.iter().map(run).collect();
    Ok(collect(outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_keys_cover_both_views() {
        let keys = table_keys();
        assert_eq!(keys.len(), 19);
        assert_eq!(keys.iter().filter(|k| k.complexity == Complexity::Major).count(), 9);
        assert_eq!(*keys.last().unwrap(), SeriesKey::TOTAL);
    }

    #[test]
    fn jobs_expand_only_lstm_seeds() {
        let cfg = ExperimentConfig { series: vec![SeriesKey::TOTAL], ..ExperimentConfig::default() };
        let js = jobs(&cfg);
        assert_eq!(js.len(), 13);
        assert_eq!(js.iter().filter(|j| j.model == ModelKind::Lstm).count(), 10);
        let gbt = js.iter().find(|j| j.model == ModelKind::Gbt).unwrap();
        assert_eq!(report_seeds(gbt, &cfg), (1..=10).collect::<Vec<_>>());
    }
}
