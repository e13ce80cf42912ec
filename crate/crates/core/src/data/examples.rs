use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use super::trend::{detrend, TrendModel, WeatherScaler};
use super::types::{DateRange, DemandSeries, EventRecord, WeatherRecord};
use super::DataError;
use crate::text::{encode, preprocess, EncodedText, Vocabulary};

/// Default lag depth: lags cover days t … t−6.
pub const DEFAULT_LAGS: usize = 6;

/// Events starting at or after this time flag the following day.
pub fn late_night_threshold() -> NaiveTime {
    NaiveTime::from_hms_opt(20, 0, 0).expect("valid time")
}

/// One supervised example: predict the residual of `target_date` (day t+1)
/// from information available up to day t plus day t+1's calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub target_date: NaiveDate,
    /// Residuals of days t, t−1, …, t−L.
    pub lags: Vec<f64>,
    /// Event indicators for the same days as `lags`.
    pub lag_event_flags: Vec<bool>,
    /// An event takes place on the target day.
    pub event_flag: bool,
    /// An event on day t started late in the evening.
    pub late_night_flag: bool,
    /// Standardized weather of the target day.
    pub weather: Vec<f64>,
    /// Encoded text of the target day's events.
    pub text: EncodedText,
    pub target_residual: f64,
    /// Observed count of the target day.
    pub target_count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSpec {
    /// Lag depth L; each example carries L+1 lags.
    pub lags: usize,
    /// Encoded text length S.
    pub max_len: usize,
}

/// Orders events by start time (untimed events last, ties in input order).
fn chronological(events: &[&EventRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| (events[i].start_time.is_none(), events[i].start_time));
    order
}

/// Per-day documents: titles and descriptions of the day's events joined in
/// start-time order.
pub fn day_documents(events: &[EventRecord]) -> BTreeMap<NaiveDate, String> {
    let mut by_day: BTreeMap<NaiveDate, Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        by_day.entry(e.date).or_default().push(e);
    }
    by_day
        .into_iter()
        .map(|(date, evs)| {
            let doc = chronological(&evs).into_iter().map(|i| evs[i].text()).collect::<Vec<_>>().join("\n");
            (date, doc)
        })
        .collect()
}

/// Builds one example per target day whose full lag window lies inside the
/// series. Weather is standardized with `scaler`; a target day without
/// weather is an error.
pub fn build_examples(
    series: &DemandSeries,
    trend: &TrendModel,
    events: &[EventRecord],
    weather: &[WeatherRecord],
    scaler: &WeatherScaler,
    vocab: &Vocabulary,
    spec: ExampleSpec,
) -> Result<Vec<TrainingExample>, DataError> {
    if spec.max_len == 0 {
        return Err(DataError::Config("text length must be at least 1".into()));
    }
    let residuals = detrend(series, trend);
    let docs = day_documents(events);
    let event_days: HashSet<NaiveDate> = docs.keys().copied().collect();
    let late = late_night_threshold();
    let late_days: HashSet<NaiveDate> =
        events.iter().filter(|e| e.start_time.is_some_and(|t| t >= late)).map(|e| e.date).collect();
    let weather_by_day: HashMap<NaiveDate, &WeatherRecord> = weather.iter().map(|w| (w.date, w)).collect();

    let mut out = Vec::new();
    // target index i = t+1, window t−L … t needs t−L ≥ 0
    for i in (spec.lags + 1)..series.len() {
        let target_date = series.date(i);
        let t = i - 1;
        let lags: Vec<f64> = (0..=spec.lags).map(|j| residuals[t - j]).collect();
        let lag_event_flags = (0..=spec.lags).map(|j| event_days.contains(&series.date(t - j))).collect();
        let w = weather_by_day
            .get(&target_date)
            .ok_or_else(|| DataError::Build(format!("no weather record for target date {target_date}")))?;
        let text = match docs.get(&target_date) {
            Some(doc) => encode(&preprocess(doc), vocab, spec.max_len),
            None => EncodedText::padding(spec.max_len),
        };
        out.push(TrainingExample {
            target_date,
            lags,
            lag_event_flags,
            event_flag: event_days.contains(&target_date),
            late_night_flag: late_days.contains(&series.date(t)),
            weather: scaler.transform(w).to_vec(),
            text,
            target_residual: residuals[i],
            target_count: series.counts[i] as f64,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: DateRange,
    pub val: DateRange,
    pub test: DateRange,
}

impl SplitRanges {
    /// Ranges must be pairwise disjoint and, where nonempty, in the order
    /// train < val < test.
    pub fn validate(&self) -> Result<(), DataError> {
        let named = [("train", self.train), ("validation", self.val), ("test", self.test)];
        for a in 0..3 {
            for b in (a + 1)..3 {
                let (na, ra) = named[a];
                let (nb, rb) = named[b];
                if ra.overlaps(&rb) {
                    return Err(DataError::Config(format!("{na} range {ra} overlaps {nb} range {rb}")));
                }
                if !ra.is_empty() && !rb.is_empty() && ra.start > rb.start {
                    return Err(DataError::Config(format!("{na} range {ra} must precede {nb} range {rb}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<TrainingExample>,
    pub val: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
    /// Examples whose target date lies in no range.
    pub dropped: usize,
}

pub fn split(examples: Vec<TrainingExample>, ranges: &SplitRanges) -> Result<Split, DataError> {
    ranges.validate()?;
    let mut s = Split::default();
    for e in examples {
        let d = e.target_date;
        if ranges.train.contains(d) {
            s.train.push(e);
        } else if ranges.val.contains(d) {
            s.val.push(e);
        } else if ranges.test.contains(d) {
            s.test.push(e);
        } else {
            s.dropped += 1;
        }
    }
    Ok(s)
}
