use serde::{Deserialize, Serialize};

use super::EvalError;

/// Paired actual and predicted values.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsInput {
    actual: Vec<f64>,
    predicted: Vec<f64>,
}

impl MetricsInput {
    pub fn new(actual: Vec<f64>, predicted: Vec<f64>) -> Result<Self, EvalError> {
        if actual.len() != predicted.len() {
            return Err(EvalError::Contract(format!(
                "{} actual values but {} predictions",
                actual.len(),
                predicted.len()
            )));
        }
        if actual.is_empty() {
            return Err(EvalError::Contract("metrics need at least one pair".into()));
        }
        if let Some(i) = actual.iter().chain(&predicted).position(|v| !v.is_finite()) {
            return Err(EvalError::Metric(format!("non-finite value at position {}", i % actual.len())));
        }
        Ok(Self { actual, predicted })
    }

    pub fn actual(&self) -> &[f64] {
        &self.actual
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }
}

/// Error statistics. MAPE is a percentage; R² is a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
    pub r2: f64,
    pub n: usize,
}

fn base(input: &MetricsInput) -> Metrics {
    let (y, p) = (&input.actual, &input.predicted);
    let n = y.len() as f64;
    let mae = y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let ss_res: f64 = y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
    let rmse = (ss_res / n).sqrt();
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Metrics { mae, rmse, mape: None, r2, n: y.len() }
}

/// MAE, RMSE, MAPE and R². Any zero actual value makes MAPE undefined and
/// is reported as an error.
pub fn compute_metrics(input: &MetricsInput) -> Result<Metrics, EvalError> {
    if let Some(i) = input.actual.iter().position(|&a| a == 0.0) {
        return Err(EvalError::Metric(format!("MAPE is undefined: actual value at index {i} is zero")));
    }
    let mut m = base(input);
    let n = input.len() as f64;
    let mape = input.actual.iter().zip(&input.predicted).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / n;
    m.mape = Some(100.0 * mape);
    Ok(m)
}

/// [`compute_metrics`] without MAPE, for data that may contain zeros.
pub fn compute_metrics_without_mape(input: &MetricsInput) -> Metrics {
    base(input)
}

/// Metrics on event days and on non-event days; `None` marks an empty group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub event: Option<Metrics>,
    pub non_event: Option<Metrics>,
}

pub fn breakdown(input: &MetricsInput, event_days: &[bool]) -> Result<Breakdown, EvalError> {
    if event_days.len() != input.len() {
        return Err(EvalError::Contract(format!(
            "{} event flags for {} predictions",
            event_days.len(),
            input.len()
        )));
    }
    let group = |want: bool| -> Result<Option<Metrics>, EvalError> {
        let (y, p): (Vec<f64>, Vec<f64>) = input
            .actual
            .iter()
            .zip(&input.predicted)
            .zip(event_days)
            .filter(|(_, &f)| f == want)
            .map(|((&a, &b), _)| (a, b))
            .unzip();
        if y.is_empty() {
            return Ok(None);
        }
        compute_metrics(&MetricsInput::new(y, p)?).map(Some)
    };
    Ok(Breakdown { event: group(true)?, non_event: group(false)? })
}
