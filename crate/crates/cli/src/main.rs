use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wardcast::config::RunConfig;
use wardcast::error::{CliError, Result};
use wardcast::{io, pipeline};
use wardcast_core::calendar::{CalendarDate, DateRange};
use wardcast_core::dataset::SeriesKey;
use wardcast_core::eval::ModelKind;

/// Forecast daily hospital admissions per ward and complexity.
///
/// Steps compose through directories: generate (or ingest), impute,
/// featurize, tune, train, evaluate, explain. `report` runs all of them
/// into one bundle. Exit codes: 0 success, 2 configuration error, 3 data
/// error, 4 model error. Set NO_COLOR to disable coloured error output.
#[derive(Debug, Parser)]
#[command(name = "wardcast", version)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads [default: number of cores]. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    #[command(alias = "synthgen")]
    Generate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a dataset directory from an admissions log and covariates.
    Ingest {
        /// CSV with header date,ward,complexity[,count].
        #[arg(long)]
        admissions: PathBuf,
        /// CSV with header date,tmax_c,tmin_c,wind_ms,precip_mm,is_holiday.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Anomaly window as START:END.
        #[arg(long)]
        window: Option<DateRange>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace the anomaly window with counterfactual counts.
    Impute {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Anomaly window as START:END [default: the one stored with the data].
        #[arg(long)]
        window: Option<DateRange>,
        /// Seed of the counterfactual noise.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write feature frames and train/test splits.
    Featurize {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        exp: ExperimentFlags,
    },
    /// Grid-search hyperparameters on a chronological validation split.
    Tune {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Model to tune (gbt or lstm); repeatable.
        #[arg(long = "model", value_parser = parse_model)]
        models: Vec<ModelKind>,
        /// Series to tune on, e.g. total or surgery_major.
        #[arg(long, value_parser = io::parse_series_key)]
        series: Option<SeriesKey>,
    },
    /// Train every (series, model, seed) job.
    Train {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Directory written by `tune`; its winners replace the configured models.
        #[arg(long)]
        tuned: Option<PathBuf>,
        #[command(flatten)]
        exp: ExperimentFlags,
    },
    /// Score trained models on the test windows.
    Evaluate {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        models: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature importance and Shapley waterfall for the boosted-tree model.
    Explain {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        models: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Series whose model is explained.
        #[arg(long, value_parser = io::parse_series_key)]
        series: Option<SeriesKey>,
        /// Waterfall bars before the remainder.
        #[arg(long)]
        top_k: Option<usize>,
        /// Test origin to explain [default: the last one].
        #[arg(long)]
        origin: Option<CalendarDate>,
    },
    /// Run the whole workflow into one bundle directory.
    Report {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Existing dataset directory; a synthetic one is generated otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        exp: ExperimentFlags,
    },
    /// Print the effective configuration as JSON.
    PrintConfig,
}

#[derive(Debug, Args)]
struct ExperimentFlags {
    /// Series to model, e.g. total or surgery_major; repeatable.
    #[arg(long = "series", value_parser = io::parse_series_key)]
    series: Vec<SeriesKey>,
    /// Models to run (sarimax, gbt, lstm, seasonal_naive); repeatable.
    #[arg(long = "model", value_parser = parse_model)]
    models: Vec<ModelKind>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Days held out for testing.
    #[arg(long)]
    test_days: Option<usize>,
}

impl ExperimentFlags {
    fn apply(self, cfg: &mut RunConfig) {
        let e = &mut cfg.experiment;
        if !self.series.is_empty() {
            e.series = self.series;
        }
        if !self.models.is_empty() {
            e.models = self.models;
        }
        if !self.seeds.is_empty() {
            e.seeds = self.seeds;
        }
        if let Some(t) = self.test_days {
            e.test_days = t;
        }
    }
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::from_id(s).ok_or_else(|| {
        let ids: Vec<&str> = ModelKind::ALL.iter().map(|m| m.id()).collect();
        format!("unknown model {s:?}; valid: {}", ids.join(", "))
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::config("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Generate { out, seed } => {
            if let Some(s) = seed {
                cfg.generator.seed = s;
            }
            cfg.validate()?;
            pipeline::generate(&cfg, &out)?;
        }
        Command::Ingest { admissions, covariates, window, out } => {
            cfg.anomaly_window = window.or(cfg.anomaly_window);
            let (_, rejected) = pipeline::ingest(&cfg, &admissions, covariates.as_deref(), &out)?;
            for r in &rejected {
                eprintln!("warning: {}:{}: skipped row: {}", admissions.display(), r.line, r.reason);
            }
        }
        Command::Impute { data, out, window, seed } => {
            cfg.anomaly_window = window.or(cfg.anomaly_window);
            if let Some(s) = seed {
                cfg.impute_seed = s;
            }
            let reports = pipeline::impute(&cfg, &data, &out)?;
            for r in reports {
                eprintln!("imputed {} days of {} (sigma {:.3})", r.n_replaced, r.key, r.sigma);
            }
        }
        Command::Featurize { data, out, exp } => {
            exp.apply(&mut cfg);
            cfg.validate()?;
            pipeline::featurize(&cfg, &data, &out)?;
        }
        Command::Tune { data, out, models, series } => {
            if !models.is_empty() {
                cfg.tune.models = models;
            }
            if let Some(s) = series {
                cfg.tune.series = s;
            }
            cfg.validate()?;
            for (model, r) in pipeline::tune(&cfg, &data, &out)? {
                eprintln!("{model}: best validation MAE {:.4} over {} candidates", r.winner_val_mae, r.leaderboard.len());
            }
        }
        Command::Train { data, out, tuned, exp } => {
            exp.apply(&mut cfg);
            cfg.validate()?;
            let index = pipeline::train(&cfg, &data, tuned.as_deref(), &out)?;
            report_failures(&index.failures);
        }
        Command::Evaluate { data, models, out } => {
            let ev = pipeline::evaluate(&cfg, &data, &models, &out)?;
            report_failures(&ev.report.failures);
        }
        Command::Explain { data, models, out, series, top_k, origin } => {
            if let Some(s) = series {
                cfg.explain.series = s;
            }
            if let Some(k) = top_k {
                cfg.explain.top_k = k;
            }
            cfg.explain.origin = origin.or(cfg.explain.origin);
            cfg.validate()?;
            pipeline::explain(&cfg, &data, &models, &out)?;
        }
        Command::Report { out, data, exp } => {
            exp.apply(&mut cfg);
            cfg.validate()?;
            pipeline::report(&cfg, data.as_deref(), &out)?;
        }
        Command::PrintConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        }
    }
    Ok(())
}

fn report_failures(failures: &[wardcast_core::eval::Failure]) {
    for f in failures {
        let seed = f.seed.map(|s| format!(" seed {s}")).unwrap_or_default();
        eprintln!("warning: {} {}{seed} failed: {}", f.key, f.model, f.message);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let color = std::env::var_os("NO_COLOR").is_none() && std::io::stderr().is_terminal();
            let label = match e.exit_code() {
                2 => "config",
                3 => "data",
                _ => "model",
            };
            if color {
                eprintln!("\x1b[1;31merror[{label}]\x1b[0m: {e}");
            } else {
                eprintln!("error[{label}]: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
