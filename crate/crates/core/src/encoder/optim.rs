use serde::{Deserialize, Serialize};

use super::EncoderParams;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
}

impl OptimizerState {
    pub fn new(params: &EncoderParams, learning_rate: f64) -> Self {
        OptimizerState {
            m: vec![0.0; params.param_count()],
            v: vec![0.0; params.param_count()],
            step: 0,
            learning_rate,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn optimizer_step(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut OptimizerState,
) -> Result<()> {
    let n = params.param_count();
    if grads.param_count() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: grads.param_count(),
        });
    }
    if grads.values().iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged);
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let lr = state.learning_rate;
    for (((p, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grads.values())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_encoder, EncoderDims};

    fn tiny() -> EncoderParams {
        init_encoder(
            4,
            EncoderDims {
                features: 1,
                hidden: 1,
                classes: 1,
                kernel: 1,
                stride: 1,
                depth: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = tiny();
        let before = p.clone();
        let mut st = OptimizerState::new(&p, 0.1);
        optimizer_step(&mut p, &before.zeros_like(), &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
        optimizer_step(&mut p, &before.zeros_like(), &mut st).unwrap();
        assert_eq!(st.step, 2);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.values_mut()[0] = 1.0;
        let mut st = OptimizerState::new(&p, 0.1);
        optimizer_step(&mut p, &g, &mut st).unwrap();
        // m_hat = 1, v_hat = 1 => delta = -0.1 / (1 + 1e-8)
        let delta = p.values()[0] - before.values()[0];
        assert!((delta + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(&p.values()[1..], &before.values()[1..]);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = tiny();
        let mut g = p.zeros_like();
        g.values_mut()[1] = f64::NAN;
        let mut st = OptimizerState::new(&p, 0.1);
        let err = optimizer_step(&mut p, &g, &mut st).unwrap_err();
        assert_eq!(err.to_string(), "diverged");
        assert_eq!(st.step, 0);
    }
}
