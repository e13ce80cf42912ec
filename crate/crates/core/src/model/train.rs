use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Variant};
use super::network::FusionModel;
use super::params;
use super::ModelError;
use crate::data::{PreparedDataset, TrainingExample, TrendModel};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::tensor::{adam_step, AdamConfig, AdamState, Mode, Tape, Tensor};
use crate::text::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub train_loss: f64,
    /// Validation MAE in counts; training MAE when there is no validation set.
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (1-based).
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
}

/// Mean and population standard deviation of the target residuals.
pub fn target_stats(examples: &[TrainingExample]) -> (f64, f64) {
    let n = examples.len().max(1) as f64;
    let mean = examples.iter().map(|e| e.target_residual).sum::<f64>() / n;
    let var = examples.iter().map(|e| (e.target_residual - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean absolute error of clamped count forecasts.
pub fn count_mae<T: Scalar>(model: &FusionModel<T>, examples: &[&TrainingExample], trend: &TrendModel) -> Result<f64, ModelError> {
    let f = model.forecast(examples, trend)?;
    Ok(f.iter().zip(examples).map(|(p, e)| (p - e.target_count).abs()).sum::<f64>() / examples.len().max(1) as f64)
}

/// Trains a fresh model with Adam on shuffled mini-batches. After every
/// epoch the validation MAE (in counts) is measured; training stops once it
/// has not improved for `patience` epochs and the best weights are restored.
pub fn train<T: Scalar>(
    config: &ModelConfig,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    embeddings: Option<&EmbeddingMatrix<T>>,
    trend: &TrendModel,
) -> Result<(FusionModel<T>, TrainHistory), ModelError> {
    if train_set.is_empty() {
        return Err(ModelError::Config("empty training set".into()));
    }
    let mut model = FusionModel::new(config.clone(), embeddings, target_stats(train_set))?;
    let adam = AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() };
    let mut states = model
        .params()
        .iter()
        .map(|p| if p.trainable { AdamState::new(p.tensor.len(), adam).map(Some) } else { Ok(None) })
        .collect::<Result<Vec<_>, _>>()?;

    let mut shuffle_rng = seeded(derive_seed(config.seed, "shuffle"));
    let mut dropout_rng = seeded(derive_seed(config.seed, "dropout"));
    let monitor: Vec<&TrainingExample> = if val_set.is_empty() { train_set.iter().collect() } else { val_set.iter().collect() };
    let l2 = T::lit(config.lstm_l2);
    let momentum = T::lit(config.batchnorm_momentum);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, best_val_mae: f64::INFINITY, stopped_early: false };
    let mut best = model.params().clone();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingExample> = idx.iter().map(|&i| &train_set[i]).collect();
            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, &batch, Mode::Train, &mut dropout_rng)?;
            let targets: Vec<T> = batch.iter().map(|e| model.standardize(e.target_residual)).collect();
            let target = tape.constant(Tensor::matrix(batch.len(), 1, targets)?);
            let mut loss = tape.mse_loss(fwd.prediction, target)?;
            if config.variant == Variant::DlLstm && config.lstm_l2 > 0.0 {
                for name in [params::LSTM_WX, params::LSTM_WH] {
                    let sq = tape.sum_squares(fwd.bound.var(name)?)?;
                    let sq = tape.scale(sq, l2)?;
                    loss = tape.add(loss, sq)?;
                }
            }
            let value = tape.tensor(loss).item()?.as_f64();
            if !value.is_finite() {
                return Err(ModelError::Divergence { epoch, loss: value });
            }
            tape.backward(loss)?;

            let running: Vec<(Vec<T>, Vec<T>)> = fwd
                .norms
                .iter()
                .map(|&n| {
                    let (m, v) = tape.norm_stats(n).expect("batchnorm node");
                    (m.to_vec(), v.to_vec())
                })
                .collect();
            let vars = fwd.bound.vars().to_vec();
            for ((p, state), var) in model.params_mut().iter_mut().zip(&mut states).zip(vars) {
                let Some(state) = state else { continue };
                let mut grad = tape.grad(var).expect("trainable leaf has a gradient").to_vec();
                if !p.frozen_rows.is_empty() {
                    let cols = p.tensor.shape()[1];
                    for &r in &p.frozen_rows {
                        grad[r * cols..(r + 1) * cols].fill(T::zero());
                    }
                }
                adam_step(p.tensor.values_mut(), &grad, state)?;
            }
            for (layer, (m, v)) in running.into_iter().enumerate() {
                update_running(&mut model, layer + 1, "running_mean", &m, momentum);
                update_running(&mut model, layer + 1, "running_var", &v, momentum);
            }
            loss_sum += value;
            batches += 1;
        }

        let val_mae = count_mae(&model, &monitor, trend)?;
        if !val_mae.is_finite() {
            return Err(ModelError::Divergence { epoch, loss: val_mae });
        }
        history.epochs.push(EpochRecord { epoch, train_loss: loss_sum / batches as f64, val_mae });
        if val_mae < history.best_val_mae {
            history.best_val_mae = val_mae;
            history.best_epoch = epoch;
            best = model.params().clone();
        } else if epoch - history.best_epoch >= config.patience {
            history.stopped_early = true;
            break;
        }
    }
    *model.params_mut() = best;
    Ok((model, history))
}

fn update_running<T: Scalar>(model: &mut FusionModel<T>, layer: usize, field: &str, batch: &[T], momentum: T) {
    let p = model.params_mut().get_mut(&params::bn(layer, field)).expect("running statistics");
    for (r, &b) in p.tensor.values_mut().iter_mut().zip(batch) {
        *r = momentum * *r + (T::one() - momentum) * b;
    }
}

/// [`train`] on the training and validation splits of a prepared dataset.
pub fn train_on_dataset<T: Scalar>(
    config: &ModelConfig,
    data: &PreparedDataset,
) -> Result<(FusionModel<T>, TrainHistory), ModelError> {
    let table = if config.feature_set.text() {
        Some(data.embedding_matrix::<T>().map_err(|e| ModelError::Config(e.to_string()))?)
    } else {
        None
    };
    train(config, &data.train, &data.val, table.as_ref(), &data.trend)
}
