use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::examples::{build_examples, day_documents, split, ExampleSpec, SplitRanges, TrainingExample, DEFAULT_LAGS};
use super::trend::{fit_trend, TrendModel, WeatherScaler};
use super::types::{DemandSeries, EventRecord, WeatherRecord, WEATHER_FEATURES};
use super::DataError;
use crate::model::TextGeometry;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::text::{
    build_vocabulary, known_len, load_pretrained_embeddings, preprocess, random_embeddings, EmbeddingMatrix,
    Vocabulary, DEFAULT_MAX_DOC_FRAC, EMBEDDING_DIM,
};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Text length S: fixed, or the longest in-vocabulary training document
/// (never below the encoder's minimum).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxLen {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmbeddingSource {
    /// Text vector file, one `word v1 … v_dim` entry per line.
    Pretrained { path: PathBuf, dim: usize },
    /// Uniform random rows.
    Random { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepConfig {
    pub lags: usize,
    pub max_len: MaxLen,
    pub ranges: SplitRanges,
    pub max_doc_frac: f64,
    pub embeddings: EmbeddingSource,
    /// Seeds the random embedding rows.
    pub seed: u64,
}

impl PrepConfig {
    pub fn new(ranges: SplitRanges) -> Self {
        Self {
            lags: DEFAULT_LAGS,
            max_len: MaxLen::Auto,
            ranges,
            max_doc_frac: DEFAULT_MAX_DOC_FRAC,
            embeddings: EmbeddingSource::Random { dim: EMBEDDING_DIM },
            seed: 0,
        }
    }
}

/// Everything a model needs: split examples, the fitted trend and weather
/// scaler, the vocabulary and the embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub format_version: u32,
    pub area_id: String,
    pub spec: ExampleSpec,
    pub ranges: SplitRanges,
    pub trend: TrendModel,
    pub weather_scaler: WeatherScaler,
    pub vocab: Vocabulary,
    pub embedding_dim: usize,
    /// Row-major `(V+1)×embedding_dim` table; row 0 is padding.
    pub embeddings: Vec<f64>,
    pub train: Vec<TrainingExample>,
    pub val: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
    /// Examples outside every split range.
    pub dropped: usize,
}

impl PreparedDataset {
    pub fn embedding_matrix<T: Scalar>(&self) -> Result<EmbeddingMatrix<T>, DataError> {
        let values = self.embeddings.iter().map(|&v| T::lit(v)).collect();
        Ok(EmbeddingMatrix::new(self.vocab.len() + 1, self.embedding_dim, values)?)
    }

    pub fn all_examples(&self) -> impl Iterator<Item = &TrainingExample> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// Checks internal consistency of a loaded dataset.
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Parse(m));
        if self.format_version != DATASET_FORMAT_VERSION {
            return bad(format!("dataset format version {} (expected {DATASET_FORMAT_VERSION})", self.format_version));
        }
        if self.embedding_dim == 0 || self.embeddings.len() != (self.vocab.len() + 1) * self.embedding_dim {
            return bad("embedding table does not match the vocabulary".into());
        }
        let v = self.vocab.len();
        for e in self.all_examples() {
            let ok = e.lags.len() == self.spec.lags + 1
                && e.lag_event_flags.len() == self.spec.lags + 1
                && e.weather.len() == WEATHER_FEATURES
                && e.text.len() == self.spec.max_len
                && e.text.ids().iter().all(|&id| id <= v)
                && e.lags.iter().chain(&e.weather).all(|x| x.is_finite())
                && e.target_residual.is_finite();
            if !ok {
                return bad(format!("example for {} is inconsistent with the dataset header", e.target_date));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path)
            .map_err(|e| DataError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let ds: Self = serde_json::from_reader(BufReader::new(file))?;
        ds.validate()?;
        Ok(ds)
    }
}

/// Fits every training-range statistic and assembles the split dataset.
pub fn prepare(
    series: &DemandSeries,
    events: &[EventRecord],
    weather: &[WeatherRecord],
    config: &PrepConfig,
) -> Result<PreparedDataset, DataError> {
    let ranges = config.ranges;
    ranges.validate()?;
    let train = ranges.train;
    let trend = fit_trend(series, train)?;
    let weather_scaler = WeatherScaler::fit(weather, train)?;

    let corpus: Vec<Vec<String>> =
        events.iter().filter(|e| train.contains(e.date)).map(|e| preprocess(&e.text())).collect();
    let vocab = build_vocabulary(&corpus, config.max_doc_frac)?;

    let min_len = TextGeometry::default().min_len();
    let max_len = match config.max_len {
        MaxLen::Fixed(n) if n < min_len => {
            return Err(DataError::Config(format!("text length {n} is below the encoder minimum {min_len}")));
        }
        MaxLen::Fixed(n) => n,
        MaxLen::Auto => day_documents(events)
            .iter()
            .filter(|(d, _)| train.contains(**d))
            .map(|(_, doc)| known_len(&preprocess(doc), &vocab))
            .max()
            .unwrap_or(0)
            .max(min_len),
    };

    let mut rng = seeded(derive_seed(config.seed, "embeddings"));
    let table: EmbeddingMatrix<f64> = match &config.embeddings {
        EmbeddingSource::Pretrained { path, dim } => load_pretrained_embeddings(path, &vocab, *dim, &mut rng)?,
        EmbeddingSource::Random { dim } => {
            if *dim == 0 {
                return Err(DataError::Config("embedding dimension must be positive".into()));
            }
            random_embeddings(&vocab, *dim, &mut rng)
        }
    };

    let spec = ExampleSpec { lags: config.lags, max_len };
    let examples = build_examples(series, &trend, events, weather, &weather_scaler, &vocab, spec)?;
    let parts = split(examples, &ranges)?;
    if parts.train.is_empty() {
        return Err(DataError::Config(format!("no examples fall in the training range {train}")));
    }
    Ok(PreparedDataset {
        format_version: DATASET_FORMAT_VERSION,
        area_id: series.area_id.clone(),
        spec,
        ranges,
        trend,
        weather_scaler,
        vocab,
        embedding_dim: table.dim(),
        embeddings: table.values().to_vec(),
        train: parts.train,
        val: parts.val,
        test: parts.test,
        dropped: parts.dropped,
    })
}
