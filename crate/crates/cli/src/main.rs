//! `policyscope` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{NaiveDate, SecondsFormat, Utc};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use policyscope::data::{
    load_dataset, parse_cases_csv, record_without_policy, write_cases_csv, write_policy_csv, Dataset,
};
use policyscope::forecast::{write_forecast_csv, ModelArtifact, ModelVariant};
use policyscope::pipeline::{self, ClustersReport, PipelineConfig};
use policyscope::rt::{estimate_rt_series, write_rt_csv};
use policyscope::synth::{generate, Preset};
use policyscope::whatif::{Scenario, ScenarioError};
use policyscope::Error;
use policyscope_service::{AppState, Store, DATA_DIR_ENV, DEFAULT_LISTEN, LISTEN_ENV};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "policyscope",
    version,
    about = "R_t estimation, policy clustering, lockdown-aware forecasting and what-if scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and align a cases/policy pair; prints a JSON summary.
    Ingest(IngestArgs),
    /// Estimate daily R_t for one country.
    Rt(RtArgs),
    /// Cluster countries by reaction lags and biweekly R_t; writes clusters.json.
    Cluster(ClusterArgs),
    /// Train a forecasting model; writes the model artifact JSON.
    Train(TrainArgs),
    /// Rolling forecast under the recorded policy schedule.
    Forecast(ForecastArgs),
    /// Forecast held-out days and report RMSE and MAE as JSON.
    Evaluate(ForecastArgs),
    /// Run a policy scenario against the baseline forecast.
    Whatif(WhatifArgs),
    /// Write a synthetic dataset with a manifest.
    Synth(SynthArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Daily cases CSV: country,date,new_cases.
    #[arg(long)]
    cases: PathBuf,
    /// Policy CSV: country,date,school,workplace,gatherings,transport,travel.
    #[arg(long)]
    policy: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct RtArgs {
    /// Daily cases CSV: country,date,new_cases.
    #[arg(long)]
    cases: PathBuf,
    /// Optional policy CSV; when given, estimation runs on the aligned date range.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Country to estimate.
    #[arg(long)]
    country: String,
    /// JSON config file; its `rt` section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV (country,date,rt_mode,rt_mean,ci_low,ci_high) or the service's JSON array.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// JSON config file; its `rt` and `clustering` sections are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// K-Means seed; overrides `clustering.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Smallest K on the elbow curve; overrides `clustering.k_min`.
    #[arg(long)]
    k_min: Option<usize>,
    /// Largest K on the elbow curve; overrides `clustering.k_max`.
    #[arg(long)]
    k_max: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Target country.
    #[arg(long)]
    country: String,
    /// proposed, no-lockdown-data or single-country-only.
    #[arg(long, value_parser = parse_variant)]
    variant: ModelVariant,
    /// Weight initialization and validation split seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON config file; its `model` and `training` sections are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated training countries; all countries when neither this nor --clusters is given.
    #[arg(long, value_delimiter = ',', conflicts_with = "clusters")]
    countries: Option<Vec<String>>,
    /// clusters.json from `cluster`; trains on the target's cluster.
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Exclusive end of the training range (YYYY-MM-DD); later days stay held out.
    #[arg(long)]
    train_until: Option<NaiveDate>,
    /// Artifact output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Model artifact from `train`.
    #[arg(long)]
    model: PathBuf,
    /// Country to forecast; defaults to the model's target.
    #[arg(long)]
    country: Option<String>,
    /// First forecast day (YYYY-MM-DD).
    #[arg(long)]
    start: NaiveDate,
    /// Number of days to forecast.
    #[arg(long)]
    horizon: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Forecast output as CSV (date,predicted_cases) or JSON; `evaluate` always writes JSON.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct WhatifArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Model artifact from `train`.
    #[arg(long)]
    model: PathBuf,
    /// Scenario JSON: {name, start, horizon, overrides: [{indicator, level, from, to}]}.
    #[arg(long)]
    scenario: PathBuf,
    /// Country to simulate; defaults to the model's target.
    #[arg(long)]
    country: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// planted-policy-effect, constant or three-blobs.
    #[arg(long, value_parser = parse_preset)]
    preset: Preset,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving cases.csv, policy.csv and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Listen address.
    #[arg(long, env = LISTEN_ENV, default_value = DEFAULT_LISTEN)]
    listen: String,
    /// Directory for persisted datasets and models; in-memory only when omitted.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Static console assets served under /ui.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<ModelVariant, String> {
    s.parse()
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let message = err.to_string();
        match err {
            Error::Data(_)
            | Error::Config(_)
            | Error::UnknownCountry(_)
            | Error::Scenario(ScenarioError::Validation(_)) => CliError::Validation(message),
            _ => CliError::Runtime(message),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult {
    match out {
        Some(path) => write_file(path, contents),
        None => {
            print!("{contents}");
            if !contents.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn load(input: &InputArgs) -> CliResult<Dataset> {
    let cases = read(&input.cases)?;
    let policy = read(&input.policy)?;
    let dataset = load_dataset(&cases, &policy).map_err(|e| CliError::from(Error::from(e)))?;
    for w in &dataset.warnings {
        eprintln!("warning: {w}");
    }
    Ok(dataset)
}

fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::from_json(&read(p)?)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_model(path: &Path) -> CliResult<ModelArtifact> {
    ModelArtifact::from_json(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn ingest(args: IngestArgs) -> CliResult {
    let dataset = load(&args.input)?;
    let summary = serde_json::json!({
        "countries": dataset.summary(),
        "warnings": dataset.warnings.iter().map(ToString::to_string).collect::<Vec<_>>(),
    });
    emit(args.out.as_deref(), &pipeline::to_json(&summary))
}

fn rt(args: RtArgs) -> CliResult {
    let config = load_config(args.config.as_deref())?;
    let series = match &args.policy {
        Some(policy) => {
            let dataset = load(&InputArgs { cases: args.cases.clone(), policy: policy.clone() })?;
            let entries = pipeline::rt_entries(&dataset, &args.country, &config.rt)?;
            policyscope::rt::RtSeries { country: args.country.clone(), entries }
        }
        None => {
            let parsed = parse_cases_csv(&read(&args.cases)?).map_err(|e| CliError::from(Error::from(e)))?;
            for w in &parsed.warnings {
                eprintln!("warning: {w}");
            }
            let cases = parsed
                .series
                .iter()
                .find(|s| s.country == args.country)
                .ok_or_else(|| CliError::from(Error::UnknownCountry(args.country.clone())))?;
            estimate_rt_series(&record_without_policy(cases), &config.rt).map_err(Error::from)?
        }
    };
    let body = match args.format {
        Format::Csv => write_rt_csv(&series),
        Format::Json => pipeline::to_json(&series.entries),
    };
    emit(args.out.as_deref(), &body)
}

fn cluster(args: ClusterArgs) -> CliResult {
    let dataset = load(&args.input)?;
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.clustering.seed = seed;
    }
    if let Some(k) = args.k_min {
        config.clustering.k_min = k;
    }
    if let Some(k) = args.k_max {
        config.clustering.k_max = k;
    }
    let (report, _) = pipeline::cluster_dataset(&dataset, &config.rt, &config.clustering)?;
    if report.low_confidence {
        eprintln!("warning: the elbow is weak; chosen_k = {} has low confidence", report.chosen_k);
    }
    emit(args.out.as_deref(), &pipeline::to_json(&report))
}

fn train(args: TrainArgs) -> CliResult {
    let dataset = load(&args.input)?;
    let config = load_config(args.config.as_deref())?;
    let countries: Vec<String> = match (&args.countries, &args.clusters) {
        (Some(list), _) => list.clone(),
        (None, Some(path)) => {
            let report: ClustersReport = serde_json::from_str(&read(path)?)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            report
                .cluster_of(&args.country)
                .ok_or_else(|| {
                    CliError::Validation(format!("{} is not in any cluster of {}", args.country, path.display()))
                })?
                .to_vec()
        }
        (None, None) => dataset.countries().map(str::to_string).collect(),
    };
    let artifact = pipeline::train_model(
        &dataset,
        &args.country,
        &countries,
        args.variant,
        &config.forecast(),
        args.seed,
        args.train_until,
    )?;
    eprintln!(
        "trained {} for {} on {} countries: {} epochs, best epoch {}",
        artifact.variant,
        artifact.target_country,
        artifact.cluster_countries.len(),
        artifact.metrics.epochs_run,
        artifact.metrics.best_epoch
    );
    write_file(&args.out, &artifact.to_json())
}

fn forecast(args: ForecastArgs) -> CliResult {
    let dataset = load(&args.input)?;
    let artifact = load_model(&args.model)?;
    let country = args.country.clone().unwrap_or_else(|| artifact.target_country.clone());
    if args.horizon == 0 {
        return Err(CliError::Validation("horizon must be at least 1 day".into()));
    }
    let points = pipeline::forecast(&artifact, &dataset, &country, args.start, args.horizon)?;
    let body = match args.format {
        Format::Csv => write_forecast_csv(&points),
        Format::Json => pipeline::to_json(&points),
    };
    emit(args.out.as_deref(), &body)
}

fn evaluate(args: ForecastArgs) -> CliResult {
    let dataset = load(&args.input)?;
    let artifact = load_model(&args.model)?;
    let country = args.country.clone().unwrap_or_else(|| artifact.target_country.clone());
    if args.horizon == 0 {
        return Err(CliError::Validation("horizon must be at least 1 day".into()));
    }
    let report = pipeline::evaluate_model(&artifact, &dataset, &country, args.start, args.horizon)?;
    emit(args.out.as_deref(), &pipeline::to_json(&report))
}

fn whatif(args: WhatifArgs) -> CliResult {
    let dataset = load(&args.input)?;
    let artifact = load_model(&args.model)?;
    let scenario: Scenario = serde_json::from_str(&read(&args.scenario)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.scenario.display())))?;
    let country = args.country.clone().unwrap_or_else(|| artifact.target_country.clone());
    let result = pipeline::whatif(&artifact, &dataset, &country, &scenario)?;
    emit(args.out.as_deref(), &pipeline::to_json(&result))
}

fn synth(args: SynthArgs) -> CliResult {
    let data = generate(args.preset, args.seed);
    write_file(&args.out_dir.join("cases.csv"), &write_cases_csv(&data.records))?;
    write_file(&args.out_dir.join("policy.csv"), &write_policy_csv(&data.records))?;
    let mut manifest = serde_json::to_value(&data.manifest).expect("manifest serializes");
    manifest["generated_at"] = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true).into();
    write_file(&args.out_dir.join("manifest.json"), &pipeline::to_json(&manifest))
}

fn serve(args: ServeArgs) -> CliResult {
    let store = Store::open(args.data_dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    let state = AppState { store, ui_dir: args.ui_dir };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(policyscope_service::serve(&args.listen, state)).map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Rt(a) => rt(a),
        Command::Cluster(a) => cluster(a),
        Command::Train(a) => train(a),
        Command::Forecast(a) => forecast(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Whatif(a) => whatif(a),
        Command::Synth(a) => synth(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
