use super::{EngineError, Result, Tape, Var};
use crate::scalar::Scalar;

/// Handles to the LSTM weights recorded on a tape.
///
/// `input_weights` is `[Din×4H]`, `hidden_weights` `[H×4H]`, `bias` `[4H]`;
/// the four column blocks hold the input, forget, candidate and output
/// gates in that order.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub input_weights: Var,
    pub hidden_weights: Var,
    pub bias: Var,
}

/// One step of a standard LSTM cell on a batch:
///
/// ```text
/// i, f, o = σ(x·Wxᵢ + h·Whᵢ + bᵢ), …
/// g       = tanh(x·Wx_g + h·Wh_g + b_g)
/// c'      = f ⊙ c + i ⊙ g
/// h'      = o ⊙ tanh(c')
/// ```
///
/// `x` is `[B×Din]`, `h_prev` and `c_prev` are `[B×H]`. Returns `(h', c')`.
pub fn lstm_step<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    params: &LstmParams,
) -> Result<(Var, Var)> {
    let hidden_shape = tape.shape(h_prev).to_vec();
    if hidden_shape.len() != 2 || tape.shape(c_prev) != hidden_shape.as_slice() {
        return Err(EngineError::Shape(format!(
            "hidden {:?} and cell {:?} states must be equal [B×H] matrices",
            hidden_shape,
            tape.shape(c_prev)
        )));
    }
    let h = hidden_shape[1];
    if tape.shape(params.hidden_weights) != [h, 4 * h] {
        return Err(EngineError::Shape(format!(
            "hidden weights {:?} do not match hidden size {h}",
            tape.shape(params.hidden_weights)
        )));
    }
    let from_input = tape.matmul(x, params.input_weights)?;
    let from_hidden = tape.matmul(h_prev, params.hidden_weights)?;
    let pre = tape.add(from_input, from_hidden)?;
    let pre = tape.add_bias(pre, params.bias)?;

    let i = tape.slice_cols(pre, 0, h)?;
    let f = tape.slice_cols(pre, h, 2 * h)?;
    let g = tape.slice_cols(pre, 2 * h, 3 * h)?;
    let o = tape.slice_cols(pre, 3 * h, 4 * h)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c))
}
