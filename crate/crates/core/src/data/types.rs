use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use super::DataError;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn parse_date(s: &str) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| DataError::Parse(format!("invalid date {s:?}: {e}")))
}

/// Monday = 0 … Sunday = 6.
pub fn weekday_index(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// Inclusive calendar-date range. A range whose end precedes its start is
/// empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn num_days(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.end - self.start).num_days() as usize + 1
        }
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.num_days()).map(move |i| start + chrono::Days::new(i as u64))
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        !self.is_empty() && !other.is_empty() && self.start <= other.end && other.start <= self.end
    }

    pub fn covers(&self, other: &DateRange) -> bool {
        other.is_empty() || (self.start <= other.start && other.end <= self.end)
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start.format(DATE_FORMAT), self.end.format(DATE_FORMAT))
    }
}

/// Parses `YYYY-MM-DD:YYYY-MM-DD`.
impl FromStr for DateRange {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| DataError::Parse(format!("date range {s:?} is not START:END")))?;
        Ok(Self::new(parse_date(a)?, parse_date(b)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub pickup: NaiveDateTime,
    pub lat: f64,
    pub lon: f64,
}

/// Gap-free daily pickup counts for one area.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub area_id: String,
    pub start: NaiveDate,
    pub counts: Vec<u64>,
}

impl DemandSeries {
    /// Zero-filled series covering `range`.
    pub fn zeros(area_id: impl Into<String>, range: DateRange) -> Self {
        Self { area_id: area_id.into(), start: range.start, counts: vec![0; range.num_days()] }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Last date covered. Equal to `start - 1` for an empty series.
    pub fn end(&self) -> NaiveDate {
        self.start + chrono::Days::new(self.counts.len() as u64) - chrono::Days::new(1)
    }

    pub fn range(&self) -> DateRange {
        DateRange::new(self.start, self.end())
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.start + chrono::Days::new(i as u64)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let i = (date - self.start).num_days();
        (i >= 0 && (i as usize) < self.counts.len()).then_some(i as usize)
    }

    pub fn count_on(&self, date: NaiveDate) -> Option<u64> {
        self.index_of(date).map(|i| self.counts[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, u64)> + '_ {
        self.counts.iter().enumerate().map(|(i, &c)| (self.date(i), c))
    }
}

pub const WEATHER_FEATURES: usize = 6;

pub const WEATHER_FEATURE_NAMES: [&str; WEATHER_FEATURES] = ["tmin", "tmax", "prcp", "snwd", "awnd", "fog"];

/// Daily weather observation; temperatures in °C, precipitation and snow
/// depth in mm, wind in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub date: NaiveDate,
    pub tmin: f64,
    pub tmax: f64,
    pub prcp: f64,
    pub snow_depth: f64,
    pub wind_speed: f64,
    pub fog: bool,
}

impl WeatherRecord {
    pub fn features(&self) -> [f64; WEATHER_FEATURES] {
        [self.tmin, self.tmax, self.prcp, self.snow_depth, self.wind_speed, if self.fog { 1.0 } else { 0.0 }]
    }

    pub fn validate(&self) -> Result<(), String> {
        let f = self.features();
        if f.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.tmin > self.tmax {
            return Err(format!("tmin {} above tmax {}", self.tmin, self.tmax));
        }
        if self.prcp < 0.0 || self.snow_depth < 0.0 {
            return Err("negative precipitation or snow depth".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub date: NaiveDate,
    #[serde(default, with = "optional_time")]
    pub start_time: Option<NaiveTime>,
    pub title: String,
    #[serde(default)]
    pub description: String,
}

impl EventRecord {
    pub fn text(&self) -> String {
        if self.description.is_empty() {
            self.title.clone()
        } else {
            format!("{}\n{}", self.title, self.description)
        }
    }
}

pub const TIME_FORMAT: &str = "%H:%M";

pub fn parse_time(s: &str) -> Result<Option<NaiveTime>, DataError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    NaiveTime::parse_from_str(s, TIME_FORMAT)
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map(Some)
        .map_err(|e| DataError::Parse(format!("invalid time {s:?}: {e}")))
}

mod optional_time {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Option<NaiveTime>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_str(&t.format(super::TIME_FORMAT).to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveTime>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        match raw {
            None => Ok(None),
            Some(s) => super::parse_time(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Row-level accounting for a reader.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadReport {
    pub rows: usize,
    pub skipped: usize,
    /// First few skipped rows as (1-based data row, reason).
    pub skip_samples: Vec<(usize, String)>,
}

impl ReadReport {
    const MAX_SAMPLES: usize = 5;

    pub(crate) fn skip(&mut self, row: usize, reason: impl Into<String>) {
        self.skipped += 1;
        if self.skip_samples.len() < Self::MAX_SAMPLES {
            self.skip_samples.push((row, reason.into()));
        }
    }

    pub fn accepted(&self) -> usize {
        self.rows - self.skipped
    }
}

impl fmt::Display for ReadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rows read, {} accepted, {} skipped", self.rows, self.accepted(), self.skipped)?;
        for (row, reason) in &self.skip_samples {
            write!(f, "\n  row {row}: {reason}")?;
        }
        Ok(())
    }
}
