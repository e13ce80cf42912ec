use super::{EngineError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(EngineError::Parameter(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub learning_rate: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            beta1: T::lit(config.beta1),
            beta2: T::lit(config.beta2),
            epsilon: T::lit(config.epsilon),
            learning_rate: T::lit(config.learning_rate),
        })
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(param: &mut [T], grad: &[T], state: &mut AdamState<T>) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.m.len() || param.len() != state.v.len() {
        return Err(EngineError::Contract(format!(
            "Adam length mismatch: param {}, grad {}, state {}",
            param.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0f64];
        let mut s = AdamState::new(1, AdamConfig::default()).unwrap();
        adam_step(&mut p, &[10.0], &mut s).unwrap();
        // m̂/√v̂ = 10/10 at t = 1; epsilon perturbs the 9th significant digit.
        assert!((p[0] + 0.001).abs() < 1e-11, "{}", p[0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.5f64, -2.0];
        let mut s = AdamState::new(2, AdamConfig::default()).unwrap();
        adam_step(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn constant_gradient_moves_monotonically_downhill() {
        let mut p = vec![0.0f64];
        let mut s = AdamState::new(1, AdamConfig::default()).unwrap();
        adam_step(&mut p, &[2.0], &mut s).unwrap();
        let after_one = p[0];
        adam_step(&mut p, &[2.0], &mut s).unwrap();
        assert!(after_one < 0.0);
        assert!(p[0] < after_one);
        assert_eq!(s.t, 2);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut p = vec![0.0f64; 2];
        let mut s = AdamState::new(2, AdamConfig::default()).unwrap();
        assert!(matches!(adam_step(&mut p, &[1.0], &mut s), Err(EngineError::Contract(_))));
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let bad = AdamConfig { beta1: 1.0, ..AdamConfig::default() };
        assert!(AdamState::<f64>::new(1, bad).is_err());
        let bad = AdamConfig { learning_rate: 0.0, ..AdamConfig::default() };
        assert!(AdamState::<f64>::new(1, bad).is_err());
    }
}
