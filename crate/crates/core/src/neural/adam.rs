use serde::{Deserialize, Serialize};

use super::model::TwoPathwayModel;
use super::tensor::Tensor;
use super::{NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
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

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

/// One bias-corrected Adam update. Moment buffers are created on first use.
pub fn optimizer_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(NeuralError::Shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(NeuralError::Shape("optimizer state does not match parameters".into()));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape != g.shape || p.shape != m.shape {
            return Err(NeuralError::Shape(format!("shape mismatch {:?} / {:?}", p.shape, g.shape)));
        }
        g.check_finite("gradient")?;
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.values.len() {
            let gi = g.values[i];
            m.values[i] = config.beta1 * m.values[i] + (1.0 - config.beta1) * gi;
            v.values[i] = config.beta2 * v.values[i] + (1.0 - config.beta2) * gi * gi;
            let m_hat = m.values[i] / c1;
            let v_hat = v.values[i] / c2;
            p.values[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

/// Applies `optimizer_step` to every tensor of the model.
pub fn model_step(
    model: &mut TwoPathwayModel,
    grads: &TwoPathwayModel,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    let grads: Vec<&Tensor> = grads.named_params().into_iter().map(|(_, t)| t).collect();
    let mut params: Vec<&mut Tensor> = model.named_params_mut().into_iter().map(|(_, t)| t).collect();
    optimizer_step(&mut params, &grads, state, config)
}
