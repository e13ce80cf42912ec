//! Reference predictors: exact Gaussian-process regression with a squared
//! exponential plus white-noise kernel, and the historical average.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{retrend, TrainingExample, TrendModel};
use crate::model::{target_stats, FeatureSet};

/// Candidate values applied to every hyperparameter by default.
pub const DEFAULT_GRID: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid hyperparameters: {0}")]
    Parameter(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("grid search failed: {0}")]
    Search(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

impl GpHyperparams {
    pub fn new(signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Self {
        Self { signal_variance, lengthscale, noise_variance }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let ok = [self.signal_variance, self.lengthscale, self.noise_variance].iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(BaselineError::Parameter(format!("{self:?} must be finite and positive")))
        }
    }

    /// `σf²·exp(−‖a−b‖²/(2ℓ²))`, without the noise term.
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-d2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    fn tie_key(&self) -> (f64, f64, f64) {
        (self.noise_variance, self.lengthscale, self.signal_variance)
    }
}

/// Row-major `n×d` input matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Inputs {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, BaselineError> {
        if values.len() != rows * cols {
            return Err(BaselineError::Shape(format!("{} values do not form {rows}×{cols}", values.len())));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, BaselineError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(BaselineError::Shape("rows differ in length".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Kernel matrix of `x` including the noise diagonal.
pub fn kernel_matrix(x: &Inputs, hyper: &GpHyperparams) -> Vec<f64> {
    let n = x.rows;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = hyper.kernel(x.row(i), x.row(j));
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += hyper.noise_variance;
    }
    k
}

/// Lower Cholesky factor of a symmetric row-major matrix, in place.
fn cholesky(a: &mut [f64], n: usize) -> Result<(), usize> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L·x = b` in place.
fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ·x = b` in place.
fn backward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// A fitted exact GP with zero prior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    pub hyper: GpHyperparams,
    pub train_inputs: Inputs,
    pub train_targets: Vec<f64>,
    /// Lower-triangular `n×n`, row-major.
    pub cholesky: Vec<f64>,
    /// `K⁻¹y`.
    pub alpha: Vec<f64>,
}

pub fn gp_fit(x: &Inputs, y: &[f64], hyper: GpHyperparams) -> Result<GpModel, BaselineError> {
    hyper.validate()?;
    let n = x.rows;
    if n == 0 {
        return Err(BaselineError::Shape("at least one training row is required".into()));
    }
    if y.len() != n {
        return Err(BaselineError::Shape(format!("{n} inputs but {} targets", y.len())));
    }
    if !x.values.iter().chain(y).all(|v| v.is_finite()) {
        return Err(BaselineError::Shape("training data must be finite".into()));
    }
    let mut l = kernel_matrix(x, &hyper);
    cholesky(&mut l, n).map_err(|j| {
        BaselineError::Fit(format!(
            "kernel matrix is not numerically positive definite at pivot {j}; try a larger noise variance than {}",
            hyper.noise_variance
        ))
    })?;
    let mut alpha = y.to_vec();
    forward_solve(&l, n, &mut alpha);
    backward_solve(&l, n, &mut alpha);
    Ok(GpModel { hyper, train_inputs: x.clone(), train_targets: y.to_vec(), cholesky: l, alpha })
}

/// Posterior means and predictive variances (including the noise term).
pub fn gp_predict(model: &GpModel, xs: &Inputs) -> Result<(Vec<f64>, Vec<f64>), BaselineError> {
    let x = &model.train_inputs;
    if xs.cols != x.cols {
        return Err(BaselineError::Shape(format!("query has {} columns, training inputs {}", xs.cols, x.cols)));
    }
    let n = x.rows;
    let h = &model.hyper;
    let mut means = Vec::with_capacity(xs.rows);
    let mut vars = Vec::with_capacity(xs.rows);
    let mut ks = vec![0.0; n];
    for r in 0..xs.rows {
        let q = xs.row(r);
        for (i, k) in ks.iter_mut().enumerate() {
            *k = h.kernel(x.row(i), q);
        }
        means.push(ks.iter().zip(&model.alpha).map(|(a, b)| a * b).sum());
        forward_solve(&model.cholesky, n, &mut ks);
        let explained: f64 = ks.iter().map(|v| v * v).sum();
        vars.push((h.signal_variance - explained).max(0.0) + h.noise_variance);
    }
    Ok((means, vars))
}

/// Candidate values per hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpGrid {
    pub signal_variance: Vec<f64>,
    pub lengthscale: Vec<f64>,
    pub noise_variance: Vec<f64>,
}

impl Default for GpGrid {
    fn default() -> Self {
        Self::uniform(&DEFAULT_GRID)
    }
}

impl GpGrid {
    pub fn uniform(values: &[f64]) -> Self {
        Self { signal_variance: values.to_vec(), lengthscale: values.to_vec(), noise_variance: values.to_vec() }
    }

    pub fn combinations(&self) -> Vec<GpHyperparams> {
        let mut out = Vec::new();
        for &s in &self.signal_variance {
            for &l in &self.lengthscale {
                for &n in &self.noise_variance {
                    out.push(GpHyperparams::new(s, l, n));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: GpHyperparams,
    pub best_mae: f64,
    /// Every combination with its validation MAE, or the failure.
    pub evaluated: Vec<(GpHyperparams, Result<f64, BaselineError>)>,
}

impl GridSearchResult {
    pub fn failures(&self) -> usize {
        self.evaluated.iter().filter(|(_, r)| r.is_err()).count()
    }
}

/// Fits every grid combination on the training set (in parallel) and picks
/// the lowest validation MAE.
pub fn gp_grid_search(
    train: (&Inputs, &[f64]),
    val: (&Inputs, &[f64]),
    grid: &GpGrid,
) -> Result<GridSearchResult, BaselineError> {
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(BaselineError::Search("empty grid".into()));
    }
    let (vx, vy) = val;
    if vx.rows == 0 || vy.len() != vx.rows {
        return Err(BaselineError::Shape("validation set must be nonempty with one target per row".into()));
    }
    let evaluated: Vec<_> = combos
        .par_iter()
        .map(|&h| {
            let r = gp_fit(train.0, train.1, h).and_then(|m| {
                let (mu, _) = gp_predict(&m, vx)?;
                let mae = mu.iter().zip(vy).map(|(p, y)| (p - y).abs()).sum::<f64>() / vy.len() as f64;
                if mae.is_finite() {
                    Ok(mae)
                } else {
                    Err(BaselineError::Fit("non-finite validation error".into()))
                }
            });
            (h, r)
        })
        .collect();
    let mut best: Option<(GpHyperparams, f64)> = None;
    for (h, r) in &evaluated {
        let Ok(mae) = r else { continue };
        let better = match best {
            None => true,
            Some((bh, bm)) => *mae < bm || (*mae == bm && h.tie_key() < bh.tie_key()),
        };
        if better {
            best = Some((*h, *mae));
        }
    }
    let (best, best_mae) =
        best.ok_or_else(|| BaselineError::Search(format!("all {} combinations failed to fit", evaluated.len())))?;
    Ok(GridSearchResult { best, best_mae, evaluated })
}

/// Per-weekday training mean for `date`.
pub fn historical_average(trend: &TrendModel, date: NaiveDate) -> f64 {
    trend.mean_for(date)
}

/// GP inputs: the FC encoder's input vector (standardized lags plus the
/// feature set's extras).
pub fn gp_features(examples: &[TrainingExample], feature_set: FeatureSet, target: (f64, f64)) -> Inputs {
    let (mean, std) = target;
    let std = if std > 1e-12 { std } else { 1.0 };
    let rows: Vec<Vec<f64>> = examples
        .iter()
        .map(|e| {
            let mut r: Vec<f64> = e.lags.iter().map(|l| (l - mean) / std).collect();
            if feature_set.weather() {
                r.extend(&e.weather);
            }
            if feature_set.events() {
                r.push(f64::from(u8::from(e.event_flag)));
                r.push(f64::from(u8::from(e.late_night_flag)));
            }
            r
        })
        .collect();
    Inputs::from_rows(&rows).expect("uniform example widths")
}

/// A GP on standardized residuals, with the hyperparameters chosen on the
/// validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct GpBaseline {
    pub feature_set: FeatureSet,
    pub target: (f64, f64),
    pub model: GpModel,
    pub search: GridSearchResult,
}

impl GpBaseline {
    pub fn fit(
        train: &[TrainingExample],
        val: &[TrainingExample],
        feature_set: FeatureSet,
        grid: &GpGrid,
    ) -> Result<Self, BaselineError> {
        if train.is_empty() || val.is_empty() {
            return Err(BaselineError::Shape("GP baseline needs training and validation examples".into()));
        }
        let (mean, std) = target_stats(train);
        let std = if std > 1e-12 { std } else { 1.0 };
        let target = (mean, std);
        let std_y = |ex: &[TrainingExample]| ex.iter().map(|e| (e.target_residual - mean) / std).collect::<Vec<_>>();
        let (tx, ty) = (gp_features(train, feature_set, target), std_y(train));
        let (vx, vy) = (gp_features(val, feature_set, target), std_y(val));
        let search = gp_grid_search((&tx, &ty), (&vx, &vy), grid)?;
        let model = gp_fit(&tx, &ty, search.best)?;
        Ok(Self { feature_set, target, model, search })
    }

    pub fn predict_residuals(&self, examples: &[TrainingExample]) -> Result<Vec<f64>, BaselineError> {
        let x = gp_features(examples, self.feature_set, self.target);
        let (mu, _) = gp_predict(&self.model, &x)?;
        Ok(mu.iter().map(|m| m * self.target.1 + self.target.0).collect())
    }

    /// Count forecasts: retrended residuals clamped at zero.
    pub fn forecast(&self, examples: &[TrainingExample], trend: &TrendModel) -> Result<Vec<f64>, BaselineError> {
        let r = self.predict_residuals(examples)?;
        Ok(r.iter().zip(examples).map(|(&r, e)| retrend(r, trend, e.target_date).max(0.0)).collect())
    }
}
