//! Building blocks of the fusion network, expressed on a [`Tape`].

use super::geometry::TextGeometry;
use super::ModelError;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{lstm_step, LstmParams, Mode, NormStats, Tape, Tensor, Var};

/// Tape handles of the text encoder weights.
#[derive(Debug, Clone)]
pub struct TextVars {
    pub embedding: Var,
    pub kernels: Vec<Var>,
    pub biases: Vec<Var>,
}

/// Embeds `ids` (`batch` rows of equal length) and runs the
/// convolution stack: conv, ReLU, max-pool and dropout per stage. The result
/// is flattened position-major to `[B×K]`.
pub fn encode_text<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &TextVars,
    ids: &[usize],
    batch: usize,
    geometry: &TextGeometry,
    keep_prob: T,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var, ModelError> {
    if batch == 0 || ids.len() % batch != 0 {
        return Err(ModelError::Contract(format!("{} ids cannot form {batch} rows", ids.len())));
    }
    let len = ids.len() / batch;
    let min = geometry.min_len();
    if len < min {
        return Err(ModelError::Config(format!("text length {len} is below the encoder minimum {min}")));
    }
    if vars.kernels.len() != geometry.stages() || vars.biases.len() != geometry.stages() {
        return Err(ModelError::Contract("text weights do not match the geometry".into()));
    }
    let mut x = tape.embed_conv1d(vars.embedding, ids, batch, vars.kernels[0], vars.biases[0])?;
    for stage in 0..geometry.stages() {
        if stage > 0 {
            x = tape.conv1d(x, vars.kernels[stage], vars.biases[stage])?;
        }
        x = tape.relu(x)?;
        x = tape.maxpool1d(x, geometry.pools[stage])?;
        x = tape.dropout(x, keep_prob, mode, rng)?;
    }
    let (positions, filters) = match tape.shape(x) {
        &[_, p, f] => (p, f),
        s => return Err(ModelError::Contract(format!("unexpected text feature shape {s:?}"))),
    };
    Ok(tape.reshape(x, vec![batch, positions * filters])?)
}

/// Attention of the text features `z` (`[B×K]`) conditioned on the
/// time-series representation `c` (`[B×H]`):
///
/// ```text
/// e = tanh(wz·z + c·wc + b)     (c·wc + b broadcast along each row)
/// α = softmax(e)                (per row)
/// h = α ⊙ z
/// ```
///
/// Returns `(h, α)`.
pub fn attend<T: Scalar>(tape: &mut Tape<T>, z: Var, c: Var, wz: Var, wc: Var, b: Var) -> Result<(Var, Var), ModelError> {
    let scaled = tape.scale_by(z, wz)?;
    let ctx = tape.matmul(c, wc)?;
    let ctx = tape.add_bias(ctx, b)?;
    let e = tape.add_column(scaled, ctx)?;
    let e = tape.tanh(e)?;
    let alpha = tape.softmax(e)?;
    let h = tape.mul(alpha, z)?;
    Ok((h, alpha))
}

/// Tape handles of one dense layer with input batch normalization.
#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub gamma: Var,
    pub beta: Var,
    pub weights: Var,
    pub bias: Var,
}

/// `[BN → dense → tanh → dropout] → [BN → dense → tanh]` on `[B×D]` input.
/// Returns the `[B×H]` output and the two batch-normalization nodes.
#[allow(clippy::too_many_arguments)]
pub fn encode_fc<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    layers: [DenseVars; 2],
    stats: [NormStats<'_, T>; 2],
    eps: T,
    keep_prob: T,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Var, [Var; 2]), ModelError> {
    let mut h = x;
    let mut norms = [x; 2];
    for (i, (layer, st)) in layers.iter().zip(stats).enumerate() {
        let n = tape.batchnorm(h, layer.gamma, layer.beta, st, eps)?;
        norms[i] = n;
        h = tape.matmul(n, layer.weights)?;
        h = tape.add_bias(h, layer.bias)?;
        h = tape.tanh(h)?;
        if i == 0 {
            h = tape.dropout(h, keep_prob, mode, rng)?;
        }
    }
    Ok((h, norms))
}

/// Runs the LSTM over `steps` (oldest first, each `[B×Din]`) from zero
/// state and returns the final hidden state.
pub fn encode_lstm<T: Scalar>(tape: &mut Tape<T>, steps: &[Var], params: &LstmParams) -> Result<Var, ModelError> {
    let first = *steps.first().ok_or_else(|| ModelError::Contract("empty input sequence".into()))?;
    let batch = tape.shape(first)[0];
    let hidden = match tape.shape(params.hidden_weights) {
        &[h, _] => h,
        s => return Err(ModelError::Contract(format!("hidden weights have shape {s:?}"))),
    };
    let mut h = tape.constant(Tensor::zeros(vec![batch, hidden])?);
    let mut c = tape.constant(Tensor::zeros(vec![batch, hidden])?);
    for &x in steps {
        (h, c) = lstm_step(tape, x, h, c, params)?;
    }
    Ok(h)
}

/// `ŷ = z_ts·w_ts + h·w_text + extras·w_extra + b`, as `[B×1]`.
pub fn fusion_head<T: Scalar>(
    tape: &mut Tape<T>,
    ts: (Var, Var),
    text: Option<(Var, Var)>,
    extras: Option<(Var, Var)>,
    bias: Var,
) -> Result<Var, ModelError> {
    let mut y = tape.matmul(ts.0, ts.1)?;
    for (x, w) in text.into_iter().chain(extras) {
        let term = tape.matmul(x, w)?;
        y = tape.add(y, term)?;
    }
    Ok(tape.add_bias(y, bias)?)
}
