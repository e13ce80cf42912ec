use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{breakdown, compute_metrics, Breakdown, Metrics, MetricsInput};
use super::EvalError;
use crate::baselines::{historical_average, GpBaseline, GpGrid};
use crate::data::{
    prepare, read_events_file, read_series_file, read_weather_file, synthesize, DateRange, EmbeddingSource, MaxLen,
    PrepConfig, PreparedDataset, SplitRanges, SynthConfig, TrainingExample, DEFAULT_LAGS,
};
use crate::model::{train_on_dataset, FeatureSet, ModelConfig, Variant};
use crate::scalar::Scalar;
use crate::text::{DEFAULT_MAX_DOC_FRAC, EMBEDDING_DIM};

pub const DEFAULT_RUNS: usize = 5;

/// Split ranges written as `start:end` strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: String,
    pub val: String,
    pub test: String,
}

impl SplitSpec {
    pub fn to_ranges(&self) -> Result<SplitRanges, EvalError> {
        let parse = |s: &str| s.parse::<DateRange>().map_err(|e| EvalError::Config(e.to_string()));
        Ok(SplitRanges { train: parse(&self.train)?, val: parse(&self.val)?, test: parse(&self.test)? })
    }

    /// Splits of the default two-year synthetic corpus.
    pub fn synthetic_default() -> Self {
        Self {
            train: "2013-01-01:2014-03-31".into(),
            val: "2014-04-01:2014-07-31".into(),
            test: "2014-08-01:2014-12-31".into(),
        }
    }
}

fn default_lags() -> usize {
    DEFAULT_LAGS
}

fn default_dim() -> usize {
    EMBEDDING_DIM
}

fn default_doc_frac() -> f64 {
    DEFAULT_MAX_DOC_FRAC
}

fn default_synth_splits() -> SplitSpec {
    SplitSpec::synthetic_default()
}

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// A dataset written by `prep`.
    Prepared { path: PathBuf },
    /// Raw series, event and weather files.
    Files {
        series: PathBuf,
        events: PathBuf,
        weather: PathBuf,
        /// Pretrained vector file; random vectors when absent.
        embeddings: Option<PathBuf>,
        #[serde(default = "default_dim")]
        embedding_dim: usize,
        #[serde(default = "default_lags")]
        lags: usize,
        /// Fixed text length; longest training document when absent.
        max_len: Option<usize>,
        #[serde(default = "default_doc_frac")]
        max_doc_frac: f64,
        splits: SplitSpec,
        #[serde(default)]
        seed: u64,
    },
    /// The seeded synthetic corpus.
    Synthetic {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        synth: SynthConfig,
        #[serde(default = "default_synth_splits")]
        splits: SplitSpec,
        #[serde(default = "default_dim")]
        embedding_dim: usize,
        #[serde(default = "default_lags")]
        lags: usize,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<PreparedDataset, EvalError> {
        match self {
            DataSource::Prepared { path } => Ok(PreparedDataset::load(path)?),
            DataSource::Files { series, events, weather, embeddings, embedding_dim, lags, max_len, max_doc_frac, splits, seed } => {
                let s = read_series_file(series)?;
                let (ev, _) = read_events_file(events)?;
                let (w, _) = read_weather_file(weather)?;
                let mut cfg = PrepConfig::new(splits.to_ranges()?);
                cfg.lags = *lags;
                cfg.max_len = max_len.map_or(MaxLen::Auto, MaxLen::Fixed);
                cfg.max_doc_frac = *max_doc_frac;
                cfg.seed = *seed;
                cfg.embeddings = match embeddings {
                    Some(path) => EmbeddingSource::Pretrained { path: path.clone(), dim: *embedding_dim },
                    None => EmbeddingSource::Random { dim: *embedding_dim },
                };
                Ok(prepare(&s, &ev, &w, &cfg)?)
            }
            DataSource::Synthetic { seed, synth, splits, embedding_dim, lags } => {
                let data = synthesize(*seed, synth)?;
                let mut cfg = PrepConfig::new(splits.to_ranges()?);
                cfg.lags = *lags;
                cfg.seed = *seed;
                cfg.embeddings = EmbeddingSource::Random { dim: *embedding_dim };
                Ok(prepare(&data.series, &data.events, &data.weather, &cfg)?)
            }
        }
    }
}

/// Optional overrides of the model defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOverrides {
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub keep_prob: Option<f64>,
    pub train_embeddings: Option<bool>,
}

impl TrainingOverrides {
    pub fn apply(&self, c: &mut ModelConfig) {
        if let Some(v) = self.max_epochs {
            c.max_epochs = v;
        }
        if let Some(v) = self.patience {
            c.patience = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.keep_prob {
            c.keep_prob = v;
        }
        if let Some(v) = self.train_embeddings {
            c.train_embeddings = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Gp,
    Ha,
}

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_feature_sets() -> Vec<FeatureSet> {
    FeatureSet::ALL.to_vec()
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_feature_sets")]
    pub feature_sets: Vec<FeatureSet>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub baselines: Vec<BaselineKind>,
    #[serde(default)]
    pub training: TrainingOverrides,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            variants: default_variants(),
            feature_sets: default_feature_sets(),
            runs: DEFAULT_RUNS,
            base_seed: 0,
            baselines: Vec::new(),
            training: TrainingOverrides::default(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.runs == 0 {
            return Err(EvalError::Config("run count must be at least 1".into()));
        }
        if self.variants.is_empty() && self.baselines.is_empty() {
            return Err(EvalError::Config("nothing to run: no variants and no baselines".into()));
        }
        if !self.variants.is_empty() && self.feature_sets.is_empty() {
            return Err(EvalError::Config("no feature sets requested".into()));
        }
        Ok(())
    }
}

/// Row label of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Neural(Variant),
    Gp,
    Ha,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Neural(Variant::DlFc) => "DL-FC",
            Method::Neural(Variant::DlLstm) => "DL-LSTM",
            Method::Gp => "GP",
            Method::Ha => "HA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub overall: Metrics,
    pub breakdown: Breakdown,
    /// Epochs trained and the epoch kept; zero for baselines.
    pub epochs: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub reason: String,
}

/// Mean and sample standard deviation (zero for a single run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

/// Aggregate of one metric group across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mae: Stat,
    pub rmse: Stat,
    pub mape: Option<Stat>,
    pub r2: Stat,
    /// Days in the group.
    pub days: usize,
}

impl Summary {
    fn of(metrics: &[Metrics]) -> Option<Self> {
        let col = |f: fn(&Metrics) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
        let mape: Option<Vec<f64>> = metrics.iter().map(|m| m.mape).collect();
        Some(Self {
            mae: Stat::of(&col(|m| m.mae))?,
            rmse: Stat::of(&col(|m| m.rmse))?,
            mape: mape.and_then(|v| Stat::of(&v)),
            r2: Stat::of(&col(|m| m.r2))?,
            days: metrics[0].n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    All,
    Event,
    NonEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    /// `None` for the historical average, which uses no features.
    pub feature_set: Option<FeatureSet>,
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

impl CellReport {
    pub fn summary(&self, group: Group) -> Option<Summary> {
        let m: Vec<Metrics> = self
            .runs
            .iter()
            .filter_map(|r| match group {
                Group::All => Some(r.overall),
                Group::Event => r.breakdown.event,
                Group::NonEvent => r.breakdown.non_event,
            })
            .collect();
        Summary::of(&m)
    }

    /// Median test MAE over successful runs.
    pub fn median_mae(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.runs.iter().map(|r| r.overall.mae).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }

    pub fn label(&self) -> String {
        match self.feature_set {
            Some(fs) => format!("{} {}", self.method.label(), fs),
            None => self.method.label().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub area_id: String,
    pub runs_per_cell: usize,
    pub base_seed: u64,
    pub test_days: usize,
    pub event_days: usize,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, method: Method, feature_set: Option<FeatureSet>) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.feature_set == feature_set)
    }
}

/// Metrics of count forecasts for `test`, overall and split by event days.
pub fn score_forecasts(test: &[TrainingExample], forecasts: Vec<f64>) -> Result<(Metrics, Breakdown), EvalError> {
    let actual: Vec<f64> = test.iter().map(|e| e.target_count).collect();
    let flags: Vec<bool> = test.iter().map(|e| e.event_flag).collect();
    let input = MetricsInput::new(actual, forecasts)?;
    Ok((compute_metrics(&input)?, breakdown(&input, &flags)?))
}

fn neural_run<T: Scalar>(
    data: &PreparedDataset,
    variant: Variant,
    fs: FeatureSet,
    seed: u64,
    overrides: &TrainingOverrides,
) -> Result<RunResult, EvalError> {
    let mut config = ModelConfig::for_dataset(variant, fs, data).with_seed(seed);
    overrides.apply(&mut config);
    let (model, history) = train_on_dataset::<T>(&config, data)?;
    let test: Vec<&TrainingExample> = data.test.iter().collect();
    let forecasts = model.forecast(&test, &data.trend)?;
    let (overall, breakdown) = score_forecasts(&data.test, forecasts)?;
    Ok(RunResult { seed, overall, breakdown, epochs: history.epochs.len(), best_epoch: history.best_epoch })
}

fn baseline_run(data: &PreparedDataset, method: Method, fs: Option<FeatureSet>) -> Result<RunResult, EvalError> {
    let forecasts = match (method, fs) {
        (Method::Gp, Some(fs)) => {
            GpBaseline::fit(&data.train, &data.val, fs, &GpGrid::default())?.forecast(&data.test, &data.trend)?
        }
        _ => data.test.iter().map(|e| historical_average(&data.trend, e.target_date)).collect(),
    };
    let (overall, breakdown) = score_forecasts(&data.test, forecasts)?;
    Ok(RunResult { seed: 0, overall, breakdown, epochs: 0, best_epoch: 0 })
}

/// Trains `runs` models per (variant, feature set) with seeds
/// `base_seed..base_seed+runs` and evaluates them on the test split.
/// Failed runs are recorded and excluded from the summaries. Runs execute
/// in parallel; the report order is fixed.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig, data: &PreparedDataset) -> Result<ExperimentReport, EvalError> {
    config.validate()?;
    if data.test.is_empty() {
        return Err(EvalError::Config("the test split is empty".into()));
    }
    let mut variants = config.variants.clone();
    variants.sort();
    variants.dedup();
    let mut sets = config.feature_sets.clone();
    sets.sort();
    sets.dedup();
    let mut baselines = config.baselines.clone();
    baselines.sort();
    baselines.dedup();

    let mut cells: Vec<(Method, Option<FeatureSet>)> = Vec::new();
    for &v in &variants {
        cells.extend(sets.iter().map(|&fs| (Method::Neural(v), Some(fs))));
    }
    for b in &baselines {
        match b {
            // the GP sees no text
            BaselineKind::Gp => cells.extend(sets.iter().filter(|fs| !fs.text()).map(|&fs| (Method::Gp, Some(fs)))),
            BaselineKind::Ha => cells.push((Method::Ha, None)),
        }
    }

    let mut jobs = Vec::new();
    for (ci, &(method, _)) in cells.iter().enumerate() {
        match method {
            Method::Neural(_) => jobs.extend((0..config.runs as u64).map(|r| (ci, config.base_seed + r))),
            // deterministic, so a single evaluation stands for every seed
            _ => jobs.push((ci, 0)),
        }
    }
    let outcomes: Vec<(usize, u64, Result<RunResult, EvalError>)> = jobs
        .par_iter()
        .map(|&(ci, seed)| {
            let (method, fs) = cells[ci];
            let r = match (method, fs) {
                (Method::Neural(v), Some(fs)) => neural_run::<T>(data, v, fs, seed, &config.training),
                _ => baseline_run(data, method, fs),
            };
            (ci, seed, r)
        })
        .collect();

    let mut reports: Vec<CellReport> = cells
        .iter()
        .map(|&(method, feature_set)| CellReport { method, feature_set, runs: Vec::new(), failures: Vec::new() })
        .collect();
    for (ci, seed, r) in outcomes {
        match r {
            Ok(run) => reports[ci].runs.push(run),
            Err(e) => reports[ci].failures.push(RunFailure { seed, reason: e.to_string() }),
        }
    }
    Ok(ExperimentReport {
        area_id: data.area_id.clone(),
        runs_per_cell: config.runs,
        base_seed: config.base_seed,
        test_days: data.test.len(),
        event_days: data.test.iter().filter(|e| e.event_flag).count(),
        cells: reports,
    })
}
