use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geometry::TextGeometry;
use super::ModelError;
use crate::data::{PreparedDataset, WEATHER_FEATURES};

/// Time-series encoder family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "dl-fc")]
    DlFc,
    #[serde(rename = "dl-lstm")]
    DlLstm,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::DlFc, Variant::DlLstm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DlFc => "dl-fc",
            Variant::DlLstm => "dl-lstm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dl-fc" => Ok(Variant::DlFc),
            "dl-lstm" => Ok(Variant::DlLstm),
            _ => Err(ModelError::Config(format!("unknown variant {s:?} (expected dl-fc or dl-lstm)"))),
        }
    }
}

/// Inputs available to a model: lags, weather, event flags, event text.
/// Each set includes the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "L")]
    L,
    #[serde(rename = "L+W")]
    LW,
    #[serde(rename = "L+W+E")]
    LWE,
    #[serde(rename = "L+W+E+T")]
    LWET,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [FeatureSet::L, FeatureSet::LW, FeatureSet::LWE, FeatureSet::LWET];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::L => "L",
            FeatureSet::LW => "L+W",
            FeatureSet::LWE => "L+W+E",
            FeatureSet::LWET => "L+W+E+T",
        }
    }

    pub fn weather(self) -> bool {
        self >= FeatureSet::LW
    }

    pub fn events(self) -> bool {
        self >= FeatureSet::LWE
    }

    pub fn text(self) -> bool {
        self == FeatureSet::LWET
    }

    /// Width of the auxiliary vector: weather features, then the event
    /// and late-night flags.
    pub fn extras_len(self) -> usize {
        let mut n = 0;
        if self.weather() {
            n += WEATHER_FEATURES;
        }
        if self.events() {
            n += 2;
        }
        n
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_uppercase();
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| ModelError::Config(format!("unknown feature set {s:?} (expected L, L+W, L+W+E or L+W+E+T)")))
    }
}

/// Full architecture and training configuration of a fusion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub feature_set: FeatureSet,
    /// Lag depth L (the model sees L+1 lags).
    pub lags: usize,
    /// Text length S.
    pub max_len: usize,
    /// Vocabulary size V (the embedding table has V+1 rows).
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub geometry: TextGeometry,
    pub fc_hidden: usize,
    /// Width of the time-series representation (FC output or LSTM state).
    pub ts_dim: usize,
    pub keep_prob: f64,
    pub lstm_l2: f64,
    pub train_embeddings: bool,
    pub batchnorm_momentum: f64,
    pub batchnorm_eps: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant, feature_set: FeatureSet, lags: usize, max_len: usize, vocab_size: usize, embedding_dim: usize) -> Self {
        Self {
            variant,
            feature_set,
            lags,
            max_len,
            vocab_size,
            embedding_dim,
            geometry: TextGeometry::default(),
            fc_hidden: 128,
            ts_dim: 50,
            keep_prob: 0.5,
            lstm_l2: 1e-4,
            train_embeddings: true,
            batchnorm_momentum: 0.99,
            batchnorm_eps: 1e-5,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 20,
            batch_size: 64,
            seed: 0,
        }
    }

    /// Configuration matching the shapes of a prepared dataset.
    pub fn for_dataset(variant: Variant, feature_set: FeatureSet, data: &PreparedDataset) -> Self {
        Self::new(variant, feature_set, data.spec.lags, data.spec.max_len, data.vocab.len(), data.embedding_dim)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Flattened text feature length K.
    pub fn text_len(&self) -> Option<usize> {
        self.geometry.feature_len(self.max_len)
    }

    /// Width of the first FC layer's input.
    pub fn fc_input_len(&self) -> usize {
        self.lags + 1 + self.feature_set.extras_len()
    }

    /// Per-step LSTM input: the residual, plus the event flag when events
    /// are in the feature set.
    pub fn lstm_input_len(&self) -> usize {
        if self.feature_set.events() {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if !self.geometry.is_consistent() {
            return fail(format!("inconsistent text geometry {:?}", self.geometry));
        }
        if self.feature_set.text() {
            let min = self.geometry.min_len();
            if self.max_len < min {
                return fail(format!("text length {} is below the encoder minimum {min}", self.max_len));
            }
            if self.embedding_dim == 0 {
                return fail("embedding dimension must be positive".into());
            }
        }
        if self.fc_hidden == 0 || self.ts_dim == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return fail("layer widths, batch size and epoch limit must be positive".into());
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return fail(format!("keep probability {} outside (0, 1]", self.keep_prob));
        }
        if !(self.lstm_l2 >= 0.0 && self.lstm_l2.is_finite()) {
            return fail(format!("L2 coefficient {} must be non-negative", self.lstm_l2));
        }
        if !(self.batchnorm_momentum >= 0.0 && self.batchnorm_momentum < 1.0 && self.batchnorm_eps > 0.0) {
            return fail("batch normalization momentum must be in [0, 1) and epsilon positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }
}
