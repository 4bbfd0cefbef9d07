//! One function per subcommand. Each reads its inputs from directories
//! written by earlier steps, writes its outputs under `out` and finishes
//! with a manifest.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wardcast_core::calendar::{CalendarDate, DateRange};
use wardcast_core::dataset::{AliasTable, Dataset, SeriesKey};
use wardcast_core::eval::{build_report, week_diagnostics, Failure, ForecastRecord, MetricsReport, ModelKind};
use wardcast_core::experiment::{
    forecast_test, jobs, prepare, records_for, report_seeds, sort_records, train_model, ExperimentConfig, FittedModel, Job, ModelBody,
    PreparedSeries,
};
use wardcast_core::explain::{gain_importance, waterfall, TreeExplainer};
use wardcast_core::features::build_frame;
use wardcast_core::gbt::GbtConfig;
use wardcast_core::imputer::{impute_dataset, ImputationReport};
use wardcast_core::lstm::LstmConfig;
use wardcast_core::synthgen::generate as synthesize;
use wardcast_core::tuner::{grid_search, Candidate, SearchSpace, TuneResult};

use crate::config::{finish_output, start_output, Manifest, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{self, Metric};
use crate::plot::{self, Line, LineChart, PALETTE};

pub const INDEX_FILE: &str = "index.json";
pub const WINNERS_FILE: &str = "winners.json";

/// Synthesizes the dataset described by `cfg.generator`.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    start_output(out, "generate")?;
    let truth = synthesize(&cfg.generator)?;
    io::write_dataset(out, &truth.dataset)?;
    finish_output(out, "generate", cfg, &[])
}

/// Converts an admissions log and covariate table into a dataset directory.
pub fn ingest(cfg: &RunConfig, admissions: &Path, covariates: Option<&Path>, out: &Path) -> Result<(Manifest, Vec<io::RejectedRow>)> {
    start_output(out, "ingest")?;
    let mut adm = io::ingest_admissions(admissions, &AliasTable::default())?;
    if let Some(p) = covariates {
        let table = io::ingest_covariates(p)?;
        table.aligned(adm.dataset.range())?;
        adm.dataset.covariates = Some(table);
    }
    if let Some(w) = cfg.anomaly_window {
        adm.dataset.set_anomaly_window(Some(w))?;
    }
    adm.dataset.check_aggregation()?;
    io::write_dataset(out, &adm.dataset)?;
    if !adm.rejected.is_empty() {
        io::write_json(&out.join("rejected_rows.json"), &adm.rejected)?;
    }
    Ok((finish_output(out, "ingest", cfg, &[])?, adm.rejected))
}

fn date_labels(start: CalendarDate, n: usize) -> Vec<String> {
    (0..n).map(|i| start.add_days(i as i64).to_string()).collect()
}

/// The configured window, else the one stored with the data.
fn anomaly_window(cfg: &RunConfig, dataset: &Dataset) -> Option<DateRange> {
    cfg.anomaly_window.or(dataset.series.values().next().and_then(|s| s.anomaly_window))
}

/// Replaces the anomaly window of every base series with counterfactual
/// draws and plots each series before and after.
pub fn impute(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<ImputationReport>> {
    let mut dataset = io::read_dataset(data)?;
    let window = anomaly_window(cfg, &dataset).ok_or_else(|| CliError::config("no anomaly window: pass --window or set anomaly_window"))?;
    start_output(out, "impute")?;
    dataset.set_anomaly_window(Some(window))?;
    let (imputed, reports) = impute_dataset(&dataset, &cfg.imputer, cfg.impute_seed)?;
    imputed.check_aggregation()?;
    io::write_dataset(out, &imputed)?;
    io::write_imputation_reports(&out.join("imputation_report.json"), &reports)?;
    let start = dataset.start();
    let a = start.days_until(window.start) as usize;
    let b = start.days_until(window.end) as usize;
    for (key, before) in &dataset.series {
        let after = &imputed.series[key];
        // Outside the window both series coincide; draw the imputed one only inside it.
        let inside = |c: &[u32]| -> Vec<f64> {
            c.iter().enumerate().map(|(i, &v)| if (a..=b).contains(&i) { f64::from(v) } else { f64::NAN }).collect()
        };
        let chart = LineChart {
            title: format!("{key}: observed and imputed (window {window})"),
            x_labels: date_labels(start, before.len()),
            lines: vec![
                Line {
                    label: "observed".into(),
                    color: PALETTE[5],
                    values: before.counts.iter().map(|&c| f64::from(c)).collect(),
                    dashed: false,
                },
                Line { label: "imputed".into(), color: PALETTE[1], values: inside(&after.counts), dashed: false },
            ],
            shade: Some((a, b)),
            y_label: "admissions/day".into(),
        };
        io::write_bytes(
            &out.join("plots").join(format!("imputation_{}.svg", key.slug())),
            plot::line_chart(&chart, 1100.0, 360.0).as_bytes(),
        )?;
    }
    finish_output(out, "impute", cfg, &[data])?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub series: String,
    pub n_rows: usize,
    pub n_train_windows: usize,
    pub n_test_windows: usize,
    pub first_test_origin: CalendarDate,
    pub last_test_origin: CalendarDate,
}

/// Writes the feature frame of every experiment series and its split.
pub fn featurize(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<SplitInfo>> {
    let dataset = io::read_dataset(data)?;
    start_output(out, "featurize")?;
    let covariates = dataset.covariates.as_ref().ok_or_else(|| CliError::Missing("dataset has no covariates".into()))?;
    let mut splits = Vec::new();
    for &key in &cfg.experiment.series {
        let series = dataset.get(key).ok_or_else(|| CliError::Missing(format!("dataset has no series {key}")))?;
        let frame = build_frame(series, covariates, true, &cfg.experiment.features)?;
        io::write_frame(&out.join(format!("{}.csv", key.slug())), &frame)?;
        let prep = prepare(&dataset, key, &cfg.experiment)?;
        splits.push(SplitInfo {
            series: key.slug(),
            n_rows: frame.len(),
            n_train_windows: prep.train.len(),
            n_test_windows: prep.test.len(),
            first_test_origin: prep.test[0].origin,
            last_test_origin: prep.test[prep.test.len() - 1].origin,
        });
    }
    io::write_json(&out.join("splits.json"), &splits)?;
    finish_output(out, "featurize", cfg, &[data])?;
    Ok(splits)
}

/// Best configurations found by `tune`, read by `train --tuned`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Winners {
    pub gbt: Option<GbtConfig>,
    pub lstm: Option<LstmConfig>,
}

impl Winners {
    pub fn apply(&self, experiment: &mut ExperimentConfig) {
        if let Some(g) = &self.gbt {
            experiment.gbt = g.clone();
        }
        if let Some(l) = &self.lstm {
            experiment.lstm = l.clone();
        }
    }
}

/// Grid search on the training windows of `cfg.tune.series`.
pub fn tune(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<(ModelKind, TuneResult)>> {
    if cfg.tune.models.is_empty() {
        return Err(CliError::config("nothing to tune: set tune.models or pass --model"));
    }
    let dataset = io::read_dataset(data)?;
    start_output(out, "tune")?;
    let prep = prepare(&dataset, cfg.tune.series, &cfg.experiment)?;
    let mut winners = Winners::default();
    let mut results = Vec::new();
    for &model in &cfg.tune.models {
        let space = match model {
            ModelKind::Gbt => SearchSpace::Gbt { grid: cfg.tune.gbt_grid.clone(), base: cfg.experiment.gbt.clone() },
            ModelKind::Lstm => SearchSpace::Lstm { grid: cfg.tune.lstm_grid.clone(), base: cfg.experiment.lstm.clone() },
            other => return Err(CliError::config(format!("no tuning grid for model {other}"))),
        };
        let result = grid_search(&space, &prep.train, &prep.frame.names)?;
        io::write_leaderboard(&out.join(format!("leaderboard_{}.csv", model.id())), &result)?;
        io::write_json(&out.join(format!("tune_{}.json", model.id())), &result)?;
        match &result.winner {
            Candidate::Gbt(c) => winners.gbt = Some(c.clone()),
            Candidate::Lstm(c) => winners.lstm = Some(c.clone()),
        }
        results.push((model, result));
    }
    io::write_json(&out.join(WINNERS_FILE), &winners)?;
    finish_output(out, "tune", cfg, &[data])?;
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub job: Job,
    /// Relative to the models directory.
    pub path: String,
}

/// Table of contents of a models directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndex {
    pub experiment: ExperimentConfig,
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<Failure>,
}

fn artifact_path(job: &Job) -> String {
    format!("{}/{}_{}.json", job.key.slug(), job.model.id(), job.seed)
}

fn failure(job: &Job, message: String) -> Failure {
    Failure { key: job.key, model: job.model, seed: job.model.is_seeded().then_some(job.seed), message }
}

fn prepare_all(dataset: &Dataset, cfg: &ExperimentConfig) -> BTreeMap<SeriesKey, std::result::Result<PreparedSeries, String>> {
    cfg.series.par_iter().map(|&k| (k, prepare(dataset, k, cfg).map_err(|e| e.to_string()))).collect::<Vec<_>>().into_iter().collect()
}

/// Trains every (series, model, seed) job. Failed jobs are listed in the
/// index instead of aborting the run.
pub fn train(cfg: &RunConfig, data: &Path, tuned: Option<&Path>, out: &Path) -> Result<ModelIndex> {
    let mut cfg = cfg.clone();
    if let Some(t) = tuned {
        let winners: Winners = io::read_json(&t.join(WINNERS_FILE))?;
        winners.apply(&mut cfg.experiment);
        cfg.validate()?;
    }
    let dataset = io::read_dataset(data)?;
    start_output(out, "train")?;
    let exp = &cfg.experiment;
    let prepared = prepare_all(&dataset, exp);
    let all = jobs(exp);
    let trained: Vec<std::result::Result<(Job, Vec<u8>), Failure>> = all
        .par_iter()
        .map(|job| match &prepared[&job.key] {
            Err(e) => Err(failure(job, e.clone())),
            Ok(prep) => match train_model(prep, job.model, job.seed, exp) {
                Ok(m) => Ok((*job, serde_json::to_vec(&m).expect("model serializes"))),
                Err(e) => Err(failure(job, e.to_string())),
            },
        })
        .collect();
    let mut index = ModelIndex { experiment: exp.clone(), artifacts: Vec::new(), failures: Vec::new() };
    for t in trained {
        match t {
            Ok((job, bytes)) => {
                let path = artifact_path(&job);
                io::write_bytes(&out.join(&path), &bytes)?;
                index.artifacts.push(Artifact { job, path });
            }
            Err(f) => index.failures.push(f),
        }
    }
    io::write_json(&out.join(INDEX_FILE), &index)?;
    let mut inputs: Vec<&Path> = vec![data];
    inputs.extend(tuned);
    finish_output(out, "train", &cfg, &inputs)?;
    Ok(index)
}

pub fn read_index(models: &Path) -> Result<ModelIndex> {
    let p = models.join(INDEX_FILE);
    if !p.exists() {
        return Err(CliError::Missing(format!("missing model artifacts in {}: run `train` first", models.display())));
    }
    io::read_json(&p)
}

fn load_model(models: &Path, a: &Artifact) -> Result<FittedModel> {
    let m: FittedModel = io::read_json(&models.join(&a.path))?;
    if m.key != a.job.key || m.kind() != a.job.model {
        return Err(CliError::file(&models.join(&a.path), "artifact does not match its index entry"));
    }
    Ok(m)
}

/// Seed whose forecasts the best/worst-week plots show.
pub fn plot_seed(seeds: &[u64]) -> u64 {
    if seeds.contains(&1) {
        1
    } else {
        seeds.iter().copied().min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<ForecastRecord>,
    pub report: MetricsReport,
}

/// Forecasts the test origins with every trained model and writes the
/// record log, metric tables and best/worst-week plots.
pub fn evaluate(cfg: &RunConfig, data: &Path, models: &Path, out: &Path) -> Result<Evaluation> {
    let index = read_index(models)?;
    let dataset = io::read_dataset(data)?;
    start_output(out, "evaluate")?;
    let exp = &index.experiment;
    let prepared = prepare_all(&dataset, exp);
    let outcomes: Vec<Result<std::result::Result<Vec<ForecastRecord>, Failure>>> = index
        .artifacts
        .par_iter()
        .map(|a| {
            let model = load_model(models, a)?;
            let prep = match &prepared[&a.job.key] {
                Ok(p) => p,
                Err(e) => return Ok(Err(failure(&a.job, e.clone()))),
            };
            Ok(match forecast_test(prep, &model, exp.sarimax_mode) {
                Ok(f) => Ok(records_for(prep, a.job.model, &report_seeds(&a.job, exp), &f)),
                Err(e) => Err(failure(&a.job, e.to_string())),
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = index.failures.clone();
    for o in outcomes {
        match o? {
            Ok(r) => records.extend(r),
            Err(f) => failures.push(f),
        }
    }
    sort_records(&mut records);
    let report = build_report(&records, failures);
    io::write_records(&out.join("records.csv"), &records)?;
    io::write_runs(&out.join("runs.csv"), &report)?;
    io::write_summary(&out.join("summary.csv"), &report)?;
    io::write_table(&out.join("mae_table.csv"), &report, &exp.models, Metric::Mae)?;
    io::write_table(&out.join("mape_table.csv"), &report, &exp.models, Metric::Mape)?;
    io::write_failures(&out.join("failures.csv"), &report)?;
    io::write_json(&out.join("metrics.json"), &report)?;

    let seed = plot_seed(&exp.seeds);
    let diagnostics: Vec<_> = week_diagnostics(&records).into_iter().filter(|d| d.seed == seed || !d.model.is_seeded()).collect();
    io::write_weeks(&out.join("weeks.csv"), &diagnostics)?;
    for d in &diagnostics {
        let seed_note = if d.model.is_seeded() { format!(", seed {}", d.seed) } else { String::new() };
        let chart = |kind: &str, w: &wardcast_core::eval::WeekWindow| LineChart {
            title: format!("{} {}: {kind} week from {} (MAE {:.2}{seed_note})", d.key, d.model, w.origin, w.mae),
            x_labels: (1..=w.actual.len())
                .map(|h| {
                    let d = w.origin.add_days(h as i64);
                    format!("{:02}-{:02}", d.month(), d.day())
                })
                .collect(),
            lines: vec![
                Line { label: "actual".into(), color: PALETTE[5], values: w.actual.to_vec(), dashed: false },
                Line { label: "forecast".into(), color: PALETTE[0], values: w.predicted.to_vec(), dashed: true },
            ],
            shade: None,
            y_label: "admissions/day".into(),
        };
        let svg = plot::panels(&[chart("best", &d.best), chart("worst", &d.worst)], 520.0, 320.0);
        io::write_bytes(&out.join("plots").join(format!("weeks_{}_{}.svg", d.key.slug(), d.model.id())), svg.as_bytes())?;
    }
    finish_output(out, "evaluate", cfg, &[data, models])?;
    Ok(Evaluation { records, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub series: String,
    pub origin: CalendarDate,
    pub method: String,
    pub n_background: usize,
    pub base: f64,
    pub prediction: f64,
    pub max_additivity_gap: f64,
}

/// Gain importance and the Shapley waterfall of one test window of the
/// gradient-boosted model.
pub fn explain(cfg: &RunConfig, data: &Path, models: &Path, out: &Path) -> Result<ExplainSummary> {
    let index = read_index(models)?;
    let key = cfg.explain.series;
    let artifact = index
        .artifacts
        .iter()
        .find(|a| a.job.key == key && a.job.model == ModelKind::Gbt)
        .ok_or_else(|| CliError::Missing(format!("missing model artifacts: no gbt model for {key}")))?;
    let FittedModel { body: ModelBody::Gbt(gbt), .. } = load_model(models, artifact)? else {
        unreachable!("index entry checked to be gbt");
    };
    let dataset = io::read_dataset(data)?;
    start_output(out, "explain")?;
    let prep = prepare(&dataset, key, &index.experiment)?;
    let sample = match cfg.explain.origin {
        Some(o) => {
            prep.test.iter().find(|s| s.origin == o).ok_or_else(|| CliError::config(format!("{o} is not a test origin of {key}")))?
        }
        None => prep.test.last().expect("prepared series has test windows"),
    };

    let importance = gain_importance(&gbt);
    io::write_importance(&out.join("importance.csv"), &importance.pooled)?;
    io::write_importance(&out.join("importance_by_feature.csv"), &importance.by_base_feature())?;
    io::write_importance_per_horizon(&out.join("importance_per_horizon.csv"), &importance)?;
    let bars: Vec<(String, f64)> = importance.by_base_feature().iter().map(|g| (g.feature.clone(), g.share)).collect();
    io::write_bytes(&out.join("importance.svg"), plot::bar_chart(&format!("{key}: share of split gain"), &bars, 640.0).as_bytes())?;

    let explainer = TreeExplainer::new(&gbt, &prep.train)?;
    let ex = explainer.explain(sample)?;
    let names = &ex.feature_names;
    let mut header = vec!["feature", "mean"];
    let h_names: Vec<String> = (1..=ex.per_horizon.len()).map(|h| format!("h{h}")).collect();
    header.extend(h_names.iter().map(String::as_str));
    let rows = names.iter().enumerate().map(|(j, n)| {
        let mut row = vec![n.clone(), ex.mean.contributions[j].to_string()];
        row.extend(ex.per_horizon.iter().map(|e| e.contributions[j].to_string()));
        row
    });
    io::write_csv(&out.join("shap_values.csv"), &header, rows)?;
    let w = waterfall(names, &ex.mean, cfg.explain.top_k);
    io::write_waterfall(&out.join("waterfall.csv"), &w)?;
    let title = format!("{key}: mean contribution over the horizon, origin {}", sample.origin);
    io::write_bytes(&out.join("waterfall.svg"), plot::waterfall_chart(&title, &w, 720.0).as_bytes())?;
    let gap = ex.per_horizon.iter().chain([&ex.mean]).map(|e| e.additivity_gap()).fold(0.0, f64::max);
    let summary = ExplainSummary {
        series: key.slug(),
        origin: sample.origin,
        method: "exact per-tree Shapley values with path-dependent (cover-weighted) expectations; covers from the training windows".into(),
        n_background: prep.train.len(),
        base: ex.mean.base,
        prediction: ex.mean.prediction,
        max_additivity_gap: gap,
    };
    io::write_json(&out.join("explain.json"), &summary)?;
    finish_output(out, "explain", cfg, &[data, models])?;
    Ok(summary)
}

/// Runs the whole workflow into one directory: data, imputation, features,
/// optional tuning, models, evaluation and explanations.
pub fn report(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<Manifest> {
    start_output(out, "report")?;
    let raw = out.join("data");
    match data {
        Some(d) => {
            let dataset = io::read_dataset(d)?;
            io::write_dataset(&raw, &dataset)?;
            finish_output(&raw, "copy", cfg, &[d])?;
        }
        None => {
            generate(cfg, &raw)?;
        }
    }
    let modelling = if anomaly_window(cfg, &io::read_dataset(&raw)?).is_some() {
        let imputed = out.join("imputed");
        impute(cfg, &raw, &imputed)?;
        imputed
    } else {
        raw
    };
    featurize(cfg, &modelling, &out.join("features"))?;
    let tuned = if cfg.tune.models.is_empty() {
        None
    } else {
        let t = out.join("tune");
        tune(cfg, &modelling, &t)?;
        Some(t)
    };
    let models = out.join("models");
    let index = train(cfg, &modelling, tuned.as_deref(), &models)?;
    let mut effective = cfg.clone();
    effective.experiment = index.experiment.clone();
    evaluate(&effective, &modelling, &models, &out.join("evaluation"))?;
    if effective.experiment.models.contains(&ModelKind::Gbt)
        && effective.experiment.series.contains(&effective.explain.series)
        && index.artifacts.iter().any(|a| a.job.model == ModelKind::Gbt && a.job.key == effective.explain.series)
    {
        explain(&effective, &modelling, &models, &out.join("explain"))?;
    }
    finish_output(out, "report", &effective, &[])
}
