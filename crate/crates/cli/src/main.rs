use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use demandfuse::baselines::{historical_average, GpBaseline, GpGrid};
use demandfuse::data::{
    aggregate_pickups_file, parse_date, prepare, read_events_file, read_series_file, read_weather_file, synthesize,
    write_events, write_series, write_weather, AreaBox, DataError, DateRange, EmbeddingSource, MaxLen, PrepConfig,
    PreparedDataset, SplitRanges, SynthConfig, TripColumns, DEFAULT_DELTA,
};
use demandfuse::eval::{
    render_report, render_report_with, run_experiment, score_forecasts, CellReport, EvalError, ExperimentConfig,
    ExperimentReport, Method, ReportFormat, RunResult,
};
use demandfuse::model::{self, FeatureSet, ModelConfig, Variant};
use demandfuse::text::EMBEDDING_DIM;

#[derive(Debug, Parser)]
#[command(name = "demandfuse", version, about = "Event-aware taxi demand forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate a trip-record CSV into a daily pickup series for one area.
    Ingest(IngestArgs),
    /// Build a prepared dataset from series, events and weather files.
    Prep(PrepArgs),
    /// Train one model and write its checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Evaluate(EvaluateArgs),
    /// Evaluate a baseline predictor on the test split.
    Baseline(BaselineArgs),
    /// Run a full ablation experiment from a TOML config.
    Experiment(ExperimentArgs),
    /// Write a synthetic series, events and weather.
    Synth(SynthArgs),
}

#[derive(Debug, clap::Args)]
struct IngestArgs {
    #[arg(long)]
    trips: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    center_lat: f64,
    #[arg(long, allow_hyphen_values = true)]
    center_lon: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, value_parser = date_arg)]
    from: NaiveDate,
    #[arg(long, value_parser = date_arg)]
    to: NaiveDate,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "area")]
    area_id: String,
    #[arg(long, default_value = "pickup_datetime")]
    datetime_column: String,
    #[arg(long, default_value = "pickup_latitude")]
    lat_column: String,
    #[arg(long, default_value = "pickup_longitude")]
    lon_column: String,
}

#[derive(Debug, clap::Args)]
struct PrepArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    weather: PathBuf,
    /// Pretrained word vectors; random vectors when omitted.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = EMBEDDING_DIM)]
    embedding_dim: usize,
    #[arg(long, default_value_t = 6)]
    lags: usize,
    /// Text length: a number, or `auto` for the longest training document.
    #[arg(long, default_value = "auto", value_parser = maxlen_arg)]
    maxlen: MaxLen,
    #[arg(long)]
    train: DateRange,
    #[arg(long)]
    val: DateRange,
    #[arg(long)]
    test: DateRange,
    #[arg(long, default_value_t = 0.9)]
    max_doc_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = variant_arg)]
    variant: Variant,
    #[arg(long, value_parser = features_arg)]
    features: FeatureSet,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => ReportFormat::Table,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Also report event and non-event days separately.
    #[arg(long)]
    breakdown: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Gp,
    Ha,
}

#[derive(Debug, clap::Args)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: BaselineMethod,
    /// `default`, or comma-separated values applied to every hyperparameter.
    #[arg(long, default_value = "default")]
    grid: String,
    /// GP inputs (the historical average uses none).
    #[arg(long, value_parser = features_arg, default_value = "L+W+E")]
    features: FeatureSet,
    #[arg(long)]
    breakdown: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, clap::Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 730)]
    days: usize,
    #[arg(long, default_value_t = 0.3)]
    event_rate: f64,
    /// Keyword lift, repeatable; defaults to megaconcert=200.
    #[arg(long = "lift", value_parser = lift_arg)]
    lifts: Vec<(String, f64)>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    keyword_rate: Option<f64>,
    #[arg(long, value_parser = date_arg)]
    start: Option<NaiveDate>,
    #[arg(long)]
    out: PathBuf,
}

fn date_arg(s: &str) -> std::result::Result<NaiveDate, String> {
    parse_date(s).map_err(|e| e.to_string())
}

fn maxlen_arg(s: &str) -> std::result::Result<MaxLen, String> {
    if s == "auto" {
        return Ok(MaxLen::Auto);
    }
    s.parse().map(MaxLen::Fixed).map_err(|_| format!("expected `auto` or a length, got {s:?}"))
}

fn variant_arg(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: model::ModelError| e.to_string())
}

fn features_arg(s: &str) -> std::result::Result<FeatureSet, String> {
    s.parse().map_err(|e: model::ModelError| e.to_string())
}

fn lift_arg(s: &str) -> std::result::Result<(String, f64), String> {
    let (w, v) = s.split_once('=').ok_or_else(|| format!("expected WORD=VALUE, got {s:?}"))?;
    let v: f64 = v.parse().map_err(|_| format!("lift {v:?} is not a number"))?;
    Ok((w.to_lowercase(), v))
}

/// Failure of a subcommand with its exit status.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(demandfuse::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => e.exit_code() as u8,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl<E: Into<demandfuse::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path)
        .map_err(|e| DataError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(DataError::Io)?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let area = AreaBox::new(a.center_lat, a.center_lon, a.delta)?;
    let cols = TripColumns { datetime: a.datetime_column, lat: a.lat_column, lon: a.lon_column };
    let range = DateRange::new(a.from, a.to);
    if range.is_empty() {
        return Err(CliError::Usage(format!("--from {} is after --to {}", a.from, a.to)));
    }
    let (series, report) = aggregate_pickups_file(&a.trips, &cols, &area, range, &a.area_id)?;
    let mut w = create(&a.out)?;
    write_series(&mut w, &series)?;
    w.flush().map_err(DataError::Io)?;
    eprintln!(
        "{} rows read, {} skipped; {} days, {} pickups in the area",
        report.rows,
        report.skipped,
        series.len(),
        series.counts.iter().sum::<u64>()
    );
    Ok(())
}

fn prep(a: PrepArgs) -> Result<()> {
    let series = read_series_file(&a.series)?;
    let (events, er) = read_events_file(&a.events)?;
    let (weather, wr) = read_weather_file(&a.weather)?;
    let mut cfg = PrepConfig::new(SplitRanges { train: a.train, val: a.val, test: a.test });
    cfg.lags = a.lags;
    cfg.max_len = a.maxlen;
    cfg.max_doc_frac = a.max_doc_frac;
    cfg.seed = a.seed;
    cfg.embeddings = match a.embeddings {
        Some(path) => EmbeddingSource::Pretrained { path, dim: a.embedding_dim },
        None => EmbeddingSource::Random { dim: a.embedding_dim },
    };
    let ds = prepare(&series, &events, &weather, &cfg)?;
    ds.save(&a.out)?;
    eprintln!(
        "events {} ({} skipped), weather days {} ({} skipped); vocabulary {}, text length {}; \
         examples train {} / val {} / test {} ({} outside the splits)",
        events.len(),
        er.skipped,
        weather.len(),
        wr.skipped,
        ds.vocab.len(),
        ds.spec.max_len,
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        ds.dropped
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = PreparedDataset::load(&a.data)?;
    let mut cfg = ModelConfig::for_dataset(a.variant, a.features, &data).with_seed(a.seed);
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    let (m, history) = model::train_on_dataset::<f64>(&cfg, &data)?;
    for r in &history.epochs {
        eprintln!("epoch {:>3}  train loss {:.6}  validation MAE {:.4}", r.epoch, r.train_loss, r.val_mae);
    }
    model::save(&m, &a.out)?;
    eprintln!(
        "{} {}: {} epochs, kept epoch {} (validation MAE {:.2})",
        a.variant,
        a.features,
        history.epochs.len(),
        history.best_epoch,
        history.best_val_mae
    );
    Ok(())
}

fn single_report(data: &PreparedDataset, method: Method, fs: Option<FeatureSet>, forecasts: Vec<f64>) -> Result<ExperimentReport> {
    if data.test.is_empty() {
        return Err(EvalError::Config("the test split is empty".into()).into());
    }
    let (overall, breakdown) = score_forecasts(&data.test, forecasts)?;
    Ok(ExperimentReport {
        area_id: data.area_id.clone(),
        runs_per_cell: 1,
        base_seed: 0,
        test_days: data.test.len(),
        event_days: data.test.iter().filter(|e| e.event_flag).count(),
        cells: vec![CellReport {
            method,
            feature_set: fs,
            runs: vec![RunResult { seed: 0, overall, breakdown, epochs: 0, best_epoch: 0 }],
            failures: Vec::new(),
        }],
    })
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let data = PreparedDataset::load(&a.data)?;
    let m: model::FusionModel<f64> = model::load(&a.model)?;
    let test: Vec<_> = data.test.iter().collect();
    let forecasts = m.forecast(&test, &data.trend)?;
    let cfg = m.config();
    let report = single_report(&data, Method::Neural(cfg.variant), Some(cfg.feature_set), forecasts)?;
    print!("{}", render_report_with(&report, a.format.into(), a.breakdown)?);
    Ok(())
}

fn parse_grid(s: &str) -> Result<GpGrid> {
    if s == "default" {
        return Ok(GpGrid::default());
    }
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad grid value {v:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(GpGrid::uniform(&values))
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let data = PreparedDataset::load(&a.data)?;
    let report = match a.method {
        BaselineMethod::Ha => {
            let f = data.test.iter().map(|e| historical_average(&data.trend, e.target_date)).collect();
            single_report(&data, Method::Ha, None, f)?
        }
        BaselineMethod::Gp => {
            if a.features.text() {
                return Err(CliError::Usage("the GP baseline does not use event text".into()));
            }
            let gp = GpBaseline::fit(&data.train, &data.val, a.features, &parse_grid(&a.grid)?)?;
            let h = gp.search.best;
            eprintln!(
                "selected signal variance {}, lengthscale {}, noise variance {} (validation MAE {:.4}, {} of {} fits failed)",
                h.signal_variance,
                h.lengthscale,
                h.noise_variance,
                gp.search.best_mae,
                gp.search.failures(),
                gp.search.evaluated.len()
            );
            let f = gp.forecast(&data.test, &data.trend)?;
            single_report(&data, Method::Gp, Some(a.features), f)?
        }
    };
    print!("{}", render_report_with(&report, a.format.into(), a.breakdown)?);
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| DataError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", a.config.display()))))?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    cfg.validate()?;
    let data = cfg.data.load()?;
    let report = run_experiment::<f64>(&cfg, &data)?;
    let table = render_report(&report, ReportFormat::Table)?;
    print!("{table}");
    if let Some(dir) = a.out.or(cfg.output_dir) {
        fs::create_dir_all(&dir).map_err(DataError::Io)?;
        write_text(&dir.join("report.txt"), &table)?;
        write_text(&dir.join("report.csv"), &render_report(&report, ReportFormat::Csv)?)?;
        eprintln!("reports written to {}", dir.display());
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig { n_days: a.days, event_rate: a.event_rate, ..SynthConfig::default() };
    if !a.lifts.is_empty() {
        cfg.keyword_lifts = a.lifts.into_iter().collect();
    }
    if let Some(v) = a.noise {
        cfg.noise_std = v;
    }
    if let Some(v) = a.keyword_rate {
        cfg.keyword_rate = v;
    }
    if let Some(d) = a.start {
        cfg.start_date = d;
    }
    let data = synthesize(a.seed, &cfg)?;
    fs::create_dir_all(&a.out).map_err(DataError::Io)?;
    let mut w = create(&a.out.join("series.csv"))?;
    write_series(&mut w, &data.series)?;
    w.flush().map_err(DataError::Io)?;
    let mut w = create(&a.out.join("events.csv"))?;
    write_events(&mut w, &data.events)?;
    w.flush().map_err(DataError::Io)?;
    let mut w = create(&a.out.join("weather.csv"))?;
    write_weather(&mut w, &data.weather)?;
    w.flush().map_err(DataError::Io)?;
    eprintln!("{} days, {} events written to {}", data.series.len(), data.events.len(), a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Prep(a) => prep(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Baseline(a) => baseline(a),
        Command::Experiment(a) => experiment(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
