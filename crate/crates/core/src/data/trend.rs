use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::types::{weekday_index, DateRange, DemandSeries, WeatherRecord, WEATHER_FEATURES};
use super::DataError;

/// Per-weekday historical means, Monday first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub day_of_week_mean: [f64; 7],
}

impl TrendModel {
    pub fn mean_for(&self, date: NaiveDate) -> f64 {
        self.day_of_week_mean[weekday_index(date)]
    }
}

/// Fits the weekday means on the days of `train` only.
pub fn fit_trend(series: &DemandSeries, train: DateRange) -> Result<TrendModel, DataError> {
    if train.is_empty() || !series.range().covers(&train) {
        return Err(DataError::Fit(format!("training range {train} is not inside the series range {}", series.range())));
    }
    let mut sum = [0.0; 7];
    let mut n = [0usize; 7];
    for date in train.days() {
        let d = weekday_index(date);
        sum[d] += series.count_on(date).expect("covered") as f64;
        n[d] += 1;
    }
    let mut day_of_week_mean = [0.0; 7];
    for d in 0..7 {
        if n[d] == 0 {
            return Err(DataError::Fit(format!("no {} in training range {train}", WEEKDAYS[d])));
        }
        day_of_week_mean[d] = sum[d] / n[d] as f64;
    }
    Ok(TrendModel { day_of_week_mean })
}

const WEEKDAYS: [&str; 7] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];

/// `count − weekday mean`, one entry per day of the series.
pub fn detrend(series: &DemandSeries, trend: &TrendModel) -> Vec<f64> {
    series.iter().map(|(date, c)| c as f64 - trend.mean_for(date)).collect()
}

pub fn retrend(residual: f64, trend: &TrendModel, date: NaiveDate) -> f64 {
    residual + trend.mean_for(date)
}

/// Per-feature standardization fitted on training-range weather. Features
/// with zero training variance map to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherScaler {
    pub mean: [f64; WEATHER_FEATURES],
    pub std: [f64; WEATHER_FEATURES],
}

impl WeatherScaler {
    /// Population statistics over the records dated inside `train`.
    pub fn fit(weather: &[WeatherRecord], train: DateRange) -> Result<Self, DataError> {
        let rows: Vec<[f64; WEATHER_FEATURES]> =
            weather.iter().filter(|w| train.contains(w.date)).map(WeatherRecord::features).collect();
        if rows.is_empty() {
            return Err(DataError::Fit(format!("no weather records in training range {train}")));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; WEATHER_FEATURES];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; WEATHER_FEATURES];
        for r in &rows {
            for j in 0..WEATHER_FEATURES {
                std[j] += (r[j] - mean[j]).powi(2);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        Ok(Self { mean, std })
    }

    pub fn transform(&self, record: &WeatherRecord) -> [f64; WEATHER_FEATURES] {
        let mut out = record.features();
        for j in 0..WEATHER_FEATURES {
            // relative threshold: a constant column can leave round-off noise
            out[j] = if self.std[j] > 1e-12 * (1.0 + self.mean[j].abs()) {
                (out[j] - self.mean[j]) / self.std[j]
            } else {
                0.0
            };
        }
        out
    }
}
