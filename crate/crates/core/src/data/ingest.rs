//! Readers for trip, weather, event and series files.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;

use super::types::{
    parse_date, parse_time, DateRange, DemandSeries, EventRecord, ReadReport, TripRecord, WeatherRecord,
    DATE_FORMAT,
};
use super::DataError;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Slack on the box test so that points on the boundary are not lost to
/// decimal round-off.
const BOX_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripColumns {
    pub datetime: String,
    pub lat: String,
    pub lon: String,
}

impl Default for TripColumns {
    fn default() -> Self {
        Self {
            datetime: "pickup_datetime".into(),
            lat: "pickup_latitude".into(),
            lon: "pickup_longitude".into(),
        }
    }
}

/// Square area of half-width `delta` degrees around a center point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaBox {
    pub center_lat: f64,
    pub center_lon: f64,
    pub delta: f64,
}

impl AreaBox {
    pub fn new(center_lat: f64, center_lon: f64, delta: f64) -> Result<Self, DataError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(DataError::Config(format!("box half-width must be positive, got {delta}")));
        }
        if !(-90.0..=90.0).contains(&center_lat) || !(-180.0..=180.0).contains(&center_lon) {
            return Err(DataError::Config(format!("center ({center_lat}, {center_lon}) is not a coordinate")));
        }
        Ok(Self { center_lat, center_lon, delta })
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (lat - self.center_lat).abs() <= self.delta + BOX_SLACK
            && (lon - self.center_lon).abs() <= self.delta + BOX_SLACK
    }
}

/// Daily counts of the trips inside `area` over `range`. Trips outside the
/// range are ignored; every day of the range is present, zero if empty.
pub fn aggregate_trips<I>(trips: I, area: &AreaBox, range: DateRange, area_id: &str) -> Result<DemandSeries, DataError>
where
    I: IntoIterator<Item = TripRecord>,
{
    if range.is_empty() {
        return Err(DataError::Config(format!("empty date range {range}")));
    }
    let mut series = DemandSeries::zeros(area_id, range);
    for t in trips {
        if area.contains(t.lat, t.lon) {
            if let Some(i) = series.index_of(t.pickup.date()) {
                series.counts[i] += 1;
            }
        }
    }
    Ok(series)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::Header(format!("missing column {name:?} in header {:?}", headers.iter().collect::<Vec<_>>())))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader)
}

fn parse_trip(rec: &csv::StringRecord, cols: (usize, usize, usize)) -> Result<TripRecord, String> {
    let field = |i: usize| rec.get(i).ok_or_else(|| format!("missing field {}", i + 1));
    let ts = field(cols.0)?;
    let pickup = NaiveDateTime::parse_from_str(ts, TIMESTAMP_FORMAT).map_err(|e| format!("timestamp {ts:?}: {e}"))?;
    let lat: f64 = field(cols.1)?.parse().map_err(|_| "latitude is not a number".to_string())?;
    let lon: f64 = field(cols.2)?.parse().map_err(|_| "longitude is not a number".to_string())?;
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(format!("coordinate ({lat}, {lon}) out of range"));
    }
    Ok(TripRecord { pickup, lat, lon })
}

/// Streams a trips CSV and aggregates it in one pass. Unparseable rows are
/// skipped and tallied; a header lacking the configured columns is an error.
pub fn aggregate_pickups<R: Read>(
    reader: R,
    columns: &TripColumns,
    area: &AreaBox,
    range: DateRange,
    area_id: &str,
) -> Result<(DemandSeries, ReadReport), DataError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Header(e.to_string()))?.clone();
    let cols = (column(&headers, &columns.datetime)?, column(&headers, &columns.lat)?, column(&headers, &columns.lon)?);
    let mut series = aggregate_trips(std::iter::empty(), area, range, area_id)?;
    let mut report = ReadReport::default();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                report.rows += 1;
                match parse_trip(&rec, cols) {
                    Ok(t) if area.contains(t.lat, t.lon) => {
                        if let Some(i) = series.index_of(t.pickup.date()) {
                            series.counts[i] += 1;
                        }
                    }
                    Ok(_) => {}
                    Err(reason) => report.skip(report.rows, reason),
                }
            }
            Err(e) if e.is_io_error() => return Err(DataError::Csv(e)),
            Err(e) => {
                report.rows += 1;
                report.skip(report.rows, e.to_string());
            }
        }
    }
    Ok((series, report))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" | "n" => Ok(false),
        "1" | "true" | "yes" | "y" => Ok(true),
        other => Err(format!("fog flag {other:?} is not boolean")),
    }
}

fn parse_weather(rec: &csv::StringRecord, cols: &[usize; 7]) -> Result<WeatherRecord, String> {
    let field = |i: usize| rec.get(cols[i]).ok_or_else(|| format!("missing field {}", cols[i] + 1));
    let num = |i: usize| -> Result<f64, String> {
        let s = field(i)?;
        s.parse::<f64>().map_err(|_| format!("{s:?} is not a number"))
    };
    let date = parse_date(field(0)?).map_err(|e| e.to_string())?;
    let w = WeatherRecord {
        date,
        tmin: num(1)?,
        tmax: num(2)?,
        prcp: num(3)?,
        snow_depth: num(4)?,
        wind_speed: num(5)?,
        fog: parse_bool(field(6)?)?,
    };
    w.validate()?;
    Ok(w)
}

/// Reads a weather CSV with columns `date, tmin, tmax, prcp, snwd, awnd,
/// fog`. Invalid rows and repeated dates are skipped. Output is sorted by
/// date.
pub fn read_weather<R: Read>(reader: R) -> Result<(Vec<WeatherRecord>, ReadReport), DataError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Header(e.to_string()))?.clone();
    let mut cols = [0; 7];
    for (c, name) in cols.iter_mut().zip(["date", "tmin", "tmax", "prcp", "snwd", "awnd", "fog"]) {
        *c = column(&headers, name)?;
    }
    let mut report = ReadReport::default();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        report.rows += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(DataError::Csv(e)),
            Err(e) => {
                report.skip(report.rows, e.to_string());
                continue;
            }
        };
        match parse_weather(&rec, &cols) {
            Ok(w) if !seen.insert(w.date) => report.skip(report.rows, format!("duplicate date {}", w.date)),
            Ok(w) => out.push(w),
            Err(reason) => report.skip(report.rows, reason),
        }
    }
    out.sort_by_key(|w| w.date);
    Ok((out, report))
}

pub fn write_weather<W: Write>(writer: W, records: &[WeatherRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "tmin", "tmax", "prcp", "snwd", "awnd", "fog"])?;
    for r in records {
        w.write_record([
            r.date.format(DATE_FORMAT).to_string(),
            r.tmin.to_string(),
            r.tmax.to_string(),
            r.prcp.to_string(),
            r.snow_depth.to_string(),
            r.wind_speed.to_string(),
            u8::from(r.fog).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    /// Delimiter-separated with a header row (`date, start_time, title,
    /// description`; only `date` and `title` are required).
    Csv,
    /// One JSON object per line with the same field names.
    JsonLines,
}

impl EventFormat {
    /// JSON lines for `.jsonl`/`.ndjson`, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl" | "ndjson") => Self::JsonLines,
            _ => Self::Csv,
        }
    }
}

fn check_event(e: EventRecord) -> Result<EventRecord, String> {
    if e.title.trim().is_empty() {
        Err("empty title".into())
    } else {
        Ok(e)
    }
}

pub fn read_events<R: Read>(reader: R, format: EventFormat) -> Result<(Vec<EventRecord>, ReadReport), DataError> {
    match format {
        EventFormat::Csv => read_events_csv(reader),
        EventFormat::JsonLines => read_events_jsonl(reader),
    }
}

fn read_events_csv<R: Read>(reader: R) -> Result<(Vec<EventRecord>, ReadReport), DataError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Header(e.to_string()))?.clone();
    let date_col = column(&headers, "date")?;
    let title_col = column(&headers, "title")?;
    let time_col = column(&headers, "start_time").ok();
    let desc_col = column(&headers, "description").ok();
    let mut report = ReadReport::default();
    let mut out = Vec::new();
    for rec in rdr.records() {
        report.rows += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(DataError::Csv(e)),
            Err(e) => {
                report.skip(report.rows, e.to_string());
                continue;
            }
        };
        let parsed = (|| -> Result<EventRecord, String> {
            let date = parse_date(rec.get(date_col).unwrap_or("")).map_err(|e| e.to_string())?;
            let start_time = match time_col.and_then(|c| rec.get(c)) {
                Some(s) => parse_time(s).map_err(|e| e.to_string())?,
                None => None,
            };
            let title = rec.get(title_col).unwrap_or("").to_string();
            let description = desc_col.and_then(|c| rec.get(c)).unwrap_or("").to_string();
            check_event(EventRecord { date, start_time, title, description })
        })();
        match parsed {
            Ok(e) => out.push(e),
            Err(reason) => report.skip(report.rows, reason),
        }
    }
    Ok((out, report))
}

fn read_events_jsonl<R: Read>(reader: R) -> Result<(Vec<EventRecord>, ReadReport), DataError> {
    let mut report = ReadReport::default();
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        match serde_json::from_str::<EventRecord>(&line).map_err(|e| e.to_string()).and_then(check_event) {
            Ok(e) => out.push(e),
            Err(reason) => report.skip(report.rows, reason),
        }
    }
    Ok((out, report))
}

pub fn write_events<W: Write>(writer: W, events: &[EventRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "start_time", "title", "description"])?;
    for e in events {
        let time = e.start_time.map(|t| t.format("%H:%M").to_string()).unwrap_or_default();
        w.write_record([e.date.format(DATE_FORMAT).to_string(), time, e.title.clone(), e.description.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `area,date,count` rows.
pub fn write_series<W: Write>(writer: W, series: &DemandSeries) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["area", "date", "count"])?;
    for (date, count) in series.iter() {
        w.write_record([series.area_id.clone(), date.format(DATE_FORMAT).to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a series written by [`write_series`]. The `area` column is
/// optional. Dates must be consecutive; any malformed row is an error.
pub fn read_series<R: Read>(reader: R) -> Result<DemandSeries, DataError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Header(e.to_string()))?.clone();
    let date_col = column(&headers, "date")?;
    let count_col = column(&headers, "count")?;
    let area_col = column(&headers, "area").ok();
    let mut series: Option<DemandSeries> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let date = parse_date(rec.get(date_col).unwrap_or(""))
            .map_err(|e| DataError::Parse(format!("series row {row}: {e}")))?;
        let raw = rec.get(count_col).unwrap_or("");
        let count: u64 = raw
            .parse()
            .map_err(|_| DataError::Parse(format!("series row {row}: count {raw:?} is not a non-negative integer")))?;
        match series.as_mut() {
            None => {
                let area = area_col.and_then(|c| rec.get(c)).unwrap_or("area").to_string();
                series = Some(DemandSeries { area_id: area, start: date, counts: vec![count] });
            }
            Some(s) => {
                let expected = s.date(s.len());
                if date != expected {
                    return Err(DataError::Parse(format!("series row {row}: expected date {expected}, found {date}")));
                }
                s.counts.push(count);
            }
        }
    }
    series.ok_or_else(|| DataError::Parse("series file has no rows".into()))
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|e| DataError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_series_file(path: &Path) -> Result<DemandSeries, DataError> {
    read_series(open(path)?)
}

pub fn read_weather_file(path: &Path) -> Result<(Vec<WeatherRecord>, ReadReport), DataError> {
    read_weather(open(path)?)
}

pub fn read_events_file(path: &Path) -> Result<(Vec<EventRecord>, ReadReport), DataError> {
    read_events(open(path)?, EventFormat::from_path(path))
}

pub fn aggregate_pickups_file(
    path: &Path,
    columns: &TripColumns,
    area: &AreaBox,
    range: DateRange,
    area_id: &str,
) -> Result<(DemandSeries, ReadReport), DataError> {
    aggregate_pickups(open(path)?, columns, area, range, area_id)
}
