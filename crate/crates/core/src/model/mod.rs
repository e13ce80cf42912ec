//! The fusion networks: a time-series encoder (fully connected or LSTM),
//! a convolutional text encoder, attention and a linear fusion head.

mod checkpoint;
mod config;
mod geometry;
pub mod layers;
pub mod params;
mod network;
mod train;

pub use checkpoint::{from_bytes, load, save, to_bytes, CHECKPOINT_VERSION};
pub use config::{FeatureSet, ModelConfig, Variant};
pub use geometry::TextGeometry;
pub use network::{Forward, FusionModel};
pub use params::{Param, ParamStore};
pub use train::{count_mae, target_stats, train, train_on_dataset, EpochRecord, TrainHistory};

use thiserror::Error;

use crate::tensor::EngineError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
