//! Trip, weather and event ingestion, detrending, supervised example
//! assembly and the synthetic verification corpus.

mod dataset;
mod examples;
mod ingest;
mod synth;
mod trend;
mod types;

pub use dataset::{prepare, EmbeddingSource, MaxLen, PrepConfig, PreparedDataset, DATASET_FORMAT_VERSION};
pub use examples::{
    build_examples, day_documents, late_night_threshold, split, ExampleSpec, Split, SplitRanges, TrainingExample,
    DEFAULT_LAGS,
};
pub use ingest::{
    aggregate_pickups, aggregate_pickups_file, aggregate_trips, read_events, read_events_file, read_series,
    read_series_file, read_weather, read_weather_file, write_events, write_series, write_weather, AreaBox,
    EventFormat, TripColumns, TIMESTAMP_FORMAT,
};
pub use synth::{synthesize, SynthConfig, SynthData, MIN_SYNTH_DAYS};
pub use trend::{detrend, fit_trend, retrend, TrendModel, WeatherScaler};
pub use types::{
    parse_date, parse_time, weekday_index, DateRange, DemandSeries, EventRecord, ReadReport, TripRecord,
    WeatherRecord, DATE_FORMAT, WEATHER_FEATURES, WEATHER_FEATURE_NAMES,
};

use thiserror::Error;

use crate::text::TextError;

/// Default half-width of the pickup box, in decimal degrees.
pub const DEFAULT_DELTA: f64 = 0.003;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("build error: {0}")]
    Build(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Text(#[from] TextError),
}
