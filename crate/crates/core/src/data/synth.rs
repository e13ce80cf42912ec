//! Seeded synthetic corpus with a known weekly pattern and planted
//! keyword lifts.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate, NaiveTime};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::types::{weekday_index, DemandSeries, EventRecord, WeatherRecord};
use super::DataError;
use crate::rng::{seeded, Rng};

pub const MIN_SYNTH_DAYS: usize = 60;

const DEFAULT_POOL: &[&str] = &[
    "arena", "stage", "crowd", "music", "band", "guitar", "drum", "vocal", "tour", "album", "live", "night",
    "jazz", "rock", "pop", "indie", "folk", "soul", "hip", "hop", "dance", "comedy", "theater", "ballet",
    "opera", "orchestra", "symphony", "festival", "fair", "market", "expo", "convention", "conference",
    "lecture", "gala", "charity", "benefit", "premiere", "film", "art", "gallery", "exhibit", "show",
    "special", "guest", "act", "headline", "ticket", "seat", "floor", "vip", "hockey", "basketball", "match",
    "game", "team", "season", "playoff", "rivalry", "championship", "fight", "family", "kid", "youth",
    "classic", "legend", "reunion", "anniversary", "holiday", "summer", "winter", "autumn", "downtown",
    "brooklyn", "city", "borough", "local", "national", "world", "grand", "final", "big", "free", "annual",
    "celebration", "parade", "circus", "magic", "acoustic", "electric", "poetry", "author", "book", "chef",
    "food", "wine", "beer", "craft", "vintage", "fashion", "design", "award", "ceremony", "league", "cup",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub start_date: NaiveDate,
    pub n_days: usize,
    /// Expected count per weekday, Monday first.
    pub weekly_pattern: [f64; 7],
    pub noise_std: f64,
    /// Probability that a day has an event.
    pub event_rate: f64,
    /// Probability that an event description carries a lift keyword.
    pub keyword_rate: f64,
    /// Additive count effect of each keyword.
    pub keyword_lifts: BTreeMap<String, f64>,
    /// Filler words for titles and descriptions.
    pub vocabulary_pool: Vec<String>,
    /// Inclusive bounds on the number of filler words per description.
    pub description_words: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            start_date: NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid date"),
            n_days: 730,
            weekly_pattern: [420.0, 440.0, 450.0, 470.0, 540.0, 600.0, 480.0],
            noise_std: 10.0,
            event_rate: 0.3,
            keyword_rate: 0.5,
            keyword_lifts: BTreeMap::from([("megaconcert".to_string(), 200.0)]),
            vocabulary_pool: DEFAULT_POOL.iter().map(|w| w.to_string()).collect(),
            description_words: (8, 16),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: String| Err(DataError::Config(m));
        if self.n_days < MIN_SYNTH_DAYS {
            return fail(format!("need at least {MIN_SYNTH_DAYS} days, got {}", self.n_days));
        }
        if self.weekly_pattern.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return fail("weekly pattern must be finite and non-negative".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return fail(format!("noise std {} must be finite and non-negative", self.noise_std));
        }
        for (name, p) in [("event rate", self.event_rate), ("keyword rate", self.keyword_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} {p} outside [0, 1]"));
            }
        }
        if let Some((w, l)) = self.keyword_lifts.iter().find(|(_, l)| !l.is_finite()) {
            return fail(format!("lift {l} for {w:?} is not finite"));
        }
        if let Some(w) = self.keyword_lifts.keys().find(|w| w.is_empty() || !w.chars().all(char::is_alphanumeric)) {
            return fail(format!("keyword {w:?} must be a single alphanumeric word"));
        }
        if self.event_rate > 0.0 && self.filler().is_empty() {
            return fail("vocabulary pool has no words besides the keywords".into());
        }
        let (lo, hi) = self.description_words;
        if lo == 0 || lo > hi {
            return fail(format!("description word bounds ({lo}, {hi}) invalid"));
        }
        Ok(())
    }

    fn filler(&self) -> Vec<&str> {
        self.vocabulary_pool
            .iter()
            .map(String::as_str)
            .filter(|w| !w.is_empty() && !self.keyword_lifts.contains_key(*w))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub series: DemandSeries,
    pub events: Vec<EventRecord>,
    pub weather: Vec<WeatherRecord>,
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn synth_weather(date: NaiveDate, rng: &mut Rng) -> WeatherRecord {
    let doy = date.ordinal() as f64;
    let seasonal = 12.0 + 12.0 * (2.0 * PI * (doy - 110.0) / 365.25).sin();
    let tmean = seasonal + Normal::new(0.0, 3.0).expect("valid").sample(rng);
    let tmin = tmean - rng.random_range(2.0..7.0);
    let tmax = tmean + rng.random_range(2.0..7.0);
    let prcp = if rng.random_bool(0.3) { Exp::new(0.2).expect("valid").sample(rng) } else { 0.0 };
    let snow_depth = if tmax < 2.0 && rng.random_bool(0.5) { rng.random_range(0.0..120.0) } else { 0.0 };
    let wind_speed: f64 = Normal::new(4.0, 2.0).expect("valid").sample(rng);
    let wind_speed = wind_speed.abs();
    let fog = rng.random_bool(0.05);
    WeatherRecord { date, tmin, tmax, prcp, snow_depth, wind_speed, fog }
}

/// Generates a series, its events and weather. The count of a day is the
/// weekday pattern plus Gaussian noise plus the lift of any keyword in that
/// day's event description, rounded and clamped at zero.
pub fn synthesize(seed: u64, config: &SynthConfig) -> Result<SynthData, DataError> {
    config.validate()?;
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| DataError::Config(e.to_string()))?;
    let filler = config.filler();
    let keywords: Vec<(&String, &f64)> = config.keyword_lifts.iter().collect();
    let (lo, hi) = config.description_words;

    let mut counts = Vec::with_capacity(config.n_days);
    let mut events = Vec::new();
    let mut weather = Vec::with_capacity(config.n_days);
    for i in 0..config.n_days {
        let date = config.start_date + chrono::Days::new(i as u64);
        weather.push(synth_weather(date, &mut rng));
        let mut lift = 0.0;
        if rng.random_bool(config.event_rate) {
            let n_title = rng.random_range(2..=3);
            let title = (0..n_title)
                .map(|_| capitalize(filler.choose(&mut rng).expect("nonempty pool")))
                .collect::<Vec<_>>()
                .join(" ");
            let n = rng.random_range(lo..=hi);
            let mut words: Vec<String> =
                (0..n).map(|_| filler.choose(&mut rng).expect("nonempty pool").to_string()).collect();
            if !keywords.is_empty() && rng.random_bool(config.keyword_rate) {
                let (kw, l) = keywords[rng.random_range(0..keywords.len())];
                let pos = rng.random_range(0..=words.len());
                words.insert(pos, kw.clone());
                lift += *l;
            }
            // half-hour slots from 10:00 to 22:30
            let slot = rng.random_range(0..26u32);
            let start_time = NaiveTime::from_hms_opt(10 + slot / 2, (slot % 2) * 30, 0);
            events.push(EventRecord {
                date,
                start_time,
                title,
                description: format!("<p>{}</p>", words.join(" ")),
            });
        }
        let raw = config.weekly_pattern[weekday_index(date)] + noise.sample(&mut rng) + lift;
        counts.push(raw.round().max(0.0) as u64);
    }
    Ok(SynthData {
        series: DemandSeries { area_id: "synthetic".into(), start: config.start_date, counts },
        events,
        weather,
    })
}
