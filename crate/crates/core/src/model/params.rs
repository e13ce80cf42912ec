use std::collections::HashMap;

use rand::Rng as _;

use super::config::{ModelConfig, Variant};
use super::ModelError;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};
use crate::text::EmbeddingMatrix;

pub const EMBEDDING: &str = "text.embedding";
pub const ATTN_WZ: &str = "attn.wz";
pub const ATTN_WC: &str = "attn.wc";
pub const ATTN_B: &str = "attn.b";
pub const LSTM_WX: &str = "lstm.wx";
pub const LSTM_WH: &str = "lstm.wh";
pub const LSTM_B: &str = "lstm.b";
pub const HEAD_TS: &str = "head.w_ts";
pub const HEAD_TEXT: &str = "head.w_text";
pub const HEAD_EXTRA: &str = "head.w_extra";
pub const HEAD_B: &str = "head.b";
/// Mean and standard deviation of the training target residuals.
pub const NORM_TARGET: &str = "norm.target";

pub fn conv_kernel(stage: usize) -> String {
    format!("text.conv{}.kernel", stage + 1)
}

pub fn conv_bias(stage: usize) -> String {
    format!("text.conv{}.bias", stage + 1)
}

pub fn bn(layer: usize, field: &str) -> String {
    format!("fc.bn{layer}.{field}")
}

pub fn dense_w(layer: usize) -> String {
    format!("fc.dense{layer}.w")
}

pub fn dense_b(layer: usize) -> String {
    format!("fc.dense{layer}.b")
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in ±√(6/(fan_in+fan_out)).
    Glorot { fan_in: usize, fan_out: usize },
    Const(f64),
    /// LSTM bias: zeros with the forget-gate block set to one.
    ForgetBias { hidden: usize },
    /// Copied from the embedding table.
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub init: Init,
}

fn spec(name: impl Into<String>, shape: Vec<usize>, trainable: bool, init: Init) -> ParamSpec {
    ParamSpec { name: name.into(), shape, trainable, init }
}

/// Every parameter a configuration needs, in a fixed order.
pub fn param_specs(config: &ModelConfig) -> Result<Vec<ParamSpec>, ModelError> {
    config.validate()?;
    let fs = config.feature_set;
    let h = config.ts_dim;
    let mut out = Vec::new();
    out.push(spec(NORM_TARGET, vec![2], false, Init::Const(0.0)));

    let text_len = if fs.text() {
        let g = &config.geometry;
        out.push(spec(
            EMBEDDING,
            vec![config.vocab_size + 1, config.embedding_dim],
            config.train_embeddings,
            Init::Embedding,
        ));
        let mut channels = config.embedding_dim;
        for s in 0..g.stages() {
            let (k, f) = (g.kernels[s], g.filters[s]);
            out.push(spec(
                conv_kernel(s),
                vec![k, channels, f],
                true,
                Init::Glorot { fan_in: k * channels, fan_out: k * f },
            ));
            out.push(spec(conv_bias(s), vec![f], true, Init::Const(0.0)));
            channels = f;
        }
        let k_len = config.text_len().ok_or_else(|| ModelError::Config("text length too short".into()))?;
        out.push(spec(ATTN_WZ, vec![1], true, Init::Glorot { fan_in: 1, fan_out: 1 }));
        out.push(spec(ATTN_WC, vec![h, 1], true, Init::Glorot { fan_in: h, fan_out: 1 }));
        out.push(spec(ATTN_B, vec![1], true, Init::Const(0.0)));
        k_len
    } else {
        0
    };

    let mut extras = 0;
    match config.variant {
        Variant::DlFc => {
            let d_in = config.fc_input_len();
            let hidden = config.fc_hidden;
            for (layer, width, fan_out) in [(1, d_in, hidden), (2, hidden, h)] {
                out.push(spec(bn(layer, "gamma"), vec![width], true, Init::Const(1.0)));
                out.push(spec(bn(layer, "beta"), vec![width], true, Init::Const(0.0)));
                out.push(spec(bn(layer, "running_mean"), vec![width], false, Init::Const(0.0)));
                out.push(spec(bn(layer, "running_var"), vec![width], false, Init::Const(1.0)));
                out.push(spec(dense_w(layer), vec![width, fan_out], true, Init::Glorot { fan_in: width, fan_out }));
                out.push(spec(dense_b(layer), vec![fan_out], true, Init::Const(0.0)));
            }
        }
        Variant::DlLstm => {
            let d = config.lstm_input_len();
            out.push(spec(LSTM_WX, vec![d, 4 * h], true, Init::Glorot { fan_in: d, fan_out: 4 * h }));
            out.push(spec(LSTM_WH, vec![h, 4 * h], true, Init::Glorot { fan_in: h, fan_out: 4 * h }));
            out.push(spec(LSTM_B, vec![4 * h], true, Init::ForgetBias { hidden: h }));
            extras = fs.extras_len();
        }
    }

    out.push(spec(HEAD_TS, vec![h, 1], true, Init::Glorot { fan_in: h, fan_out: 1 }));
    if text_len > 0 {
        out.push(spec(HEAD_TEXT, vec![text_len, 1], true, Init::Glorot { fan_in: text_len, fan_out: 1 }));
    }
    if extras > 0 {
        out.push(spec(HEAD_EXTRA, vec![extras, 1], true, Init::Glorot { fan_in: extras, fan_out: 1 }));
    }
    out.push(spec(HEAD_B, vec![1], true, Init::Const(0.0)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
    /// Rows of a matrix parameter excluded from updates.
    pub frozen_rows: Vec<usize>,
}

/// Named parameter tensors of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self { params: Vec::new(), index: HashMap::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Initializes every parameter of `specs`. `embeddings` is required when
    /// the specs include the embedding table.
    pub fn init(specs: &[ParamSpec], embeddings: Option<&EmbeddingMatrix<T>>, rng: &mut Rng) -> Result<Self, ModelError> {
        let mut store = Self::new();
        for s in specs {
            let n: usize = s.shape.iter().product();
            let values = match s.init {
                Init::Const(c) => vec![T::lit(c); n],
                Init::Glorot { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| T::lit(rng.random_range(-limit..=limit))).collect()
                }
                Init::ForgetBias { hidden } => {
                    let mut v = vec![T::zero(); n];
                    v[hidden..2 * hidden].fill(T::one());
                    v
                }
                Init::Embedding => {
                    let table = embeddings.ok_or_else(|| ModelError::Config("embedding table required".into()))?;
                    if [table.rows(), table.dim()] != s.shape[..] {
                        return Err(ModelError::Config(format!(
                            "embedding table is {}×{}, model expects {:?}",
                            table.rows(),
                            table.dim(),
                            s.shape
                        )));
                    }
                    table.values().to_vec()
                }
            };
            let frozen_rows = if s.init == Init::Embedding { vec![0] } else { Vec::new() };
            store.insert(Param {
                name: s.name.clone(),
                tensor: Tensor::new(s.shape.clone(), values)?,
                trainable: s.trainable,
                frozen_rows,
            })?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, param: Param<T>) -> Result<(), ModelError> {
        if self.index.contains_key(&param.name) {
            return Err(ModelError::Config(format!("duplicate parameter {}", param.name)));
        }
        self.index.insert(param.name.clone(), self.params.len());
        self.params.push(param);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn values(&self, name: &str) -> Result<&[T], ModelError> {
        self.get(name)
            .map(|p| p.tensor.values())
            .ok_or_else(|| ModelError::Contract(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.len()).sum()
    }

    /// Records every parameter on `tape`: trainable ones as gradient leaves,
    /// the rest as constants.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                let t = p.tensor.clone();
                if p.trainable {
                    tape.param(t)
                } else {
                    tape.constant(t)
                }
            })
            .collect();
        Bound { vars, index: self.index.clone() }
    }
}

/// Tape handles of a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var, ModelError> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| ModelError::Contract(format!("missing parameter {name}")))
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| self.vars[i])
    }

    /// Handles in store order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
