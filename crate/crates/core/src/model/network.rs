use super::config::{ModelConfig, Variant};
use super::layers::{attend, encode_fc, encode_lstm, encode_text, fusion_head, DenseVars, TextVars};
use super::params::{self, param_specs, Bound, ParamStore};
use super::ModelError;
use crate::data::{retrend, TrainingExample, TrendModel, WEATHER_FEATURES};
use crate::rng::{derive_seed, seeded, Rng};
use crate::scalar::Scalar;
use crate::tensor::{LstmParams, Mode, NormStats, Tape, Tensor, Var};
use crate::text::EmbeddingMatrix;

/// Examples are predicted in chunks of this size outside training.
const EVAL_BATCH: usize = 256;

/// Standard deviations below this are treated as one when standardizing.
const MIN_STD: f64 = 1e-12;

/// Nodes of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Standardized predictions, `[B×1]`.
    pub prediction: Var,
    /// Attention weights `[B×K]` when text is used.
    pub attention: Option<Var>,
    /// Batch-normalization nodes of the FC encoder.
    pub norms: Vec<Var>,
    pub bound: Bound,
}

/// A DL-FC or DL-LSTM fusion network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
}

impl<T: Scalar> FusionModel<T> {
    /// Fresh model with initial weights drawn from the config seed.
    /// `target` is the training residual mean and standard deviation.
    pub fn new(config: ModelConfig, embeddings: Option<&EmbeddingMatrix<T>>, target: (f64, f64)) -> Result<Self, ModelError> {
        let specs = param_specs(&config)?;
        let mut rng = seeded(derive_seed(config.seed, "init"));
        let mut params = ParamStore::init(&specs, embeddings, &mut rng)?;
        let (mean, std) = target;
        if !mean.is_finite() || !std.is_finite() {
            return Err(ModelError::Config("target statistics must be finite".into()));
        }
        let std = if std > MIN_STD { std } else { 1.0 };
        let norm = params.get_mut(params::NORM_TARGET).expect("norm parameter");
        norm.tensor.values_mut().copy_from_slice(&[T::lit(mean), T::lit(std)]);
        Ok(Self { config, params })
    }

    /// Model from an existing parameter store whose names and shapes must
    /// match the configuration exactly.
    pub fn from_parts(config: ModelConfig, params: ParamStore<T>) -> Result<Self, ModelError> {
        let specs = param_specs(&config)?;
        if specs.len() != params.len() {
            return Err(ModelError::Contract(format!(
                "configuration needs {} parameters, store has {}",
                specs.len(),
                params.len()
            )));
        }
        for s in &specs {
            let p = params.get(&s.name).ok_or_else(|| ModelError::Contract(format!("missing parameter {}", s.name)))?;
            if p.tensor.shape() != s.shape.as_slice() {
                return Err(ModelError::Contract(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    s.name,
                    p.tensor.shape(),
                    s.shape
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ParamStore<T>) {
        (self.config, self.params)
    }

    /// Training residual mean and standard deviation.
    pub fn target_stats(&self) -> (T, T) {
        let v = self.params.values(params::NORM_TARGET).expect("norm parameter");
        (v[0], v[1])
    }

    pub fn standardize(&self, residual: f64) -> T {
        let (m, s) = self.target_stats();
        (T::lit(residual) - m) / s
    }

    pub fn unstandardize(&self, y: T) -> f64 {
        let (m, s) = self.target_stats();
        (y * s + m).as_f64()
    }

    fn check_example(&self, e: &TrainingExample) -> Result<(), ModelError> {
        let cfg = &self.config;
        let fs = cfg.feature_set;
        let bad = |what: &str| {
            Err(ModelError::Contract(format!("example for {}: {what} does not match the model", e.target_date)))
        };
        if e.lags.len() != cfg.lags + 1 || e.lag_event_flags.len() != cfg.lags + 1 {
            return bad("lag count");
        }
        if fs.weather() && e.weather.len() != WEATHER_FEATURES {
            return bad("weather width");
        }
        if fs.text() && (e.text.len() != cfg.max_len || e.text.ids().iter().any(|&id| id > cfg.vocab_size)) {
            return bad("text encoding");
        }
        Ok(())
    }

    /// Auxiliary inputs: weather, then event and late-night flags.
    fn extras(&self, e: &TrainingExample) -> Vec<T> {
        let fs = self.config.feature_set;
        let mut v = Vec::with_capacity(fs.extras_len());
        if fs.weather() {
            v.extend(e.weather.iter().map(|&w| T::lit(w)));
        }
        if fs.events() {
            v.push(flag(e.event_flag));
            v.push(flag(e.late_night_flag));
        }
        v
    }

    /// Records the network on `tape` for a batch of examples.
    pub fn forward(&self, tape: &mut Tape<T>, batch: &[&TrainingExample], mode: Mode, rng: &mut Rng) -> Result<Forward, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Contract("empty batch".into()));
        }
        for e in batch {
            self.check_example(e)?;
        }
        let cfg = &self.config;
        let fs = cfg.feature_set;
        let b = batch.len();
        let n_lags = cfg.lags + 1;
        let keep = T::lit(cfg.keep_prob);
        let bound = self.params.bind(tape);
        let lag = |e: &TrainingExample, i: usize| self.standardize(e.lags[i]);
        let n_extra = fs.extras_len();

        let mut norms = Vec::new();
        let mut head_extras = None;
        let ts = match cfg.variant {
            Variant::DlFc => {
                let width = n_lags + n_extra;
                let mut x = Vec::with_capacity(b * width);
                for e in batch {
                    x.extend((0..n_lags).map(|i| lag(e, i)));
                    x.extend(self.extras(e));
                }
                let x = tape.constant(Tensor::matrix(b, width, x)?);
                let layer = |l: usize| -> Result<DenseVars, ModelError> {
                    Ok(DenseVars {
                        gamma: bound.var(&params::bn(l, "gamma"))?,
                        beta: bound.var(&params::bn(l, "beta"))?,
                        weights: bound.var(&params::dense_w(l))?,
                        bias: bound.var(&params::dense_b(l))?,
                    })
                };
                let running = |l: usize| -> Result<NormStats<'_, T>, ModelError> {
                    Ok(match mode {
                        Mode::Train => NormStats::Batch,
                        Mode::Eval => NormStats::Fixed {
                            mean: self.params.values(&params::bn(l, "running_mean"))?,
                            var: self.params.values(&params::bn(l, "running_var"))?,
                        },
                    })
                };
                let (z, n) = encode_fc(
                    tape,
                    x,
                    [layer(1)?, layer(2)?],
                    [running(1)?, running(2)?],
                    T::lit(cfg.batchnorm_eps),
                    keep,
                    mode,
                    rng,
                )?;
                norms.extend(n);
                z
            }
            Variant::DlLstm => {
                let d = cfg.lstm_input_len();
                let mut steps = Vec::with_capacity(n_lags);
                // oldest lag first
                for i in (0..n_lags).rev() {
                    let mut x = Vec::with_capacity(b * d);
                    for e in batch {
                        x.push(lag(e, i));
                        if d == 2 {
                            x.push(flag(e.lag_event_flags[i]));
                        }
                    }
                    steps.push(tape.constant(Tensor::matrix(b, d, x)?));
                }
                let p = LstmParams {
                    input_weights: bound.var(params::LSTM_WX)?,
                    hidden_weights: bound.var(params::LSTM_WH)?,
                    bias: bound.var(params::LSTM_B)?,
                };
                if n_extra > 0 {
                    let x: Vec<T> = batch.iter().flat_map(|e| self.extras(e)).collect();
                    let x = tape.constant(Tensor::matrix(b, n_extra, x)?);
                    head_extras = Some((x, bound.var(params::HEAD_EXTRA)?));
                }
                encode_lstm(tape, &steps, &p)?
            }
        };

        let mut attention = None;
        let mut head_text = None;
        if fs.text() {
            let g = &cfg.geometry;
            let vars = TextVars {
                embedding: bound.var(params::EMBEDDING)?,
                kernels: (0..g.stages()).map(|s| bound.var(&params::conv_kernel(s))).collect::<Result<_, _>>()?,
                biases: (0..g.stages()).map(|s| bound.var(&params::conv_bias(s))).collect::<Result<_, _>>()?,
            };
            let ids: Vec<usize> = batch.iter().flat_map(|e| e.text.ids().iter().copied()).collect();
            let z = encode_text(tape, &vars, &ids, b, g, keep, mode, rng)?;
            let (h, alpha) =
                attend(tape, z, ts, bound.var(params::ATTN_WZ)?, bound.var(params::ATTN_WC)?, bound.var(params::ATTN_B)?)?;
            attention = Some(alpha);
            head_text = Some((h, bound.var(params::HEAD_TEXT)?));
        }

        let prediction =
            fusion_head(tape, (ts, bound.var(params::HEAD_TS)?), head_text, head_extras, bound.var(params::HEAD_B)?)?;
        Ok(Forward { prediction, attention, norms, bound })
    }

    fn eval_chunks<R>(
        &self,
        examples: &[&TrainingExample],
        mut read: impl FnMut(&Tape<T>, &Forward) -> Vec<R>,
    ) -> Result<Vec<R>, ModelError> {
        // eval mode draws nothing from the generator
        let mut rng = seeded(0);
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(EVAL_BATCH) {
            let mut tape = Tape::new();
            let f = self.forward(&mut tape, chunk, Mode::Eval, &mut rng)?;
            out.extend(read(&tape, &f));
        }
        Ok(out)
    }

    /// Standardized predictions in inference mode.
    pub fn predict(&self, examples: &[&TrainingExample]) -> Result<Vec<T>, ModelError> {
        self.eval_chunks(examples, |tape, f| tape.values(f.prediction).to_vec())
    }

    /// Predicted residuals in count units.
    pub fn predict_residuals(&self, examples: &[&TrainingExample]) -> Result<Vec<f64>, ModelError> {
        Ok(self.predict(examples)?.into_iter().map(|y| self.unstandardize(y)).collect())
    }

    /// Count forecasts: retrended residuals clamped at zero.
    pub fn forecast(&self, examples: &[&TrainingExample], trend: &TrendModel) -> Result<Vec<f64>, ModelError> {
        let res = self.predict_residuals(examples)?;
        Ok(res.iter().zip(examples).map(|(&r, e)| retrend(r, trend, e.target_date).max(0.0)).collect())
    }

    /// Attention weights per example in inference mode; `None` without text.
    pub fn attention(&self, examples: &[&TrainingExample]) -> Result<Option<Vec<Vec<T>>>, ModelError> {
        if !self.config.feature_set.text() {
            return Ok(None);
        }
        let rows = self.eval_chunks(examples, |tape, f| {
            let a = f.attention.expect("text model records attention");
            let k = tape.shape(a)[1];
            tape.values(a).chunks(k).map(<[T]>::to_vec).collect()
        })?;
        Ok(Some(rows))
    }
}

fn flag<T: Scalar>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}
