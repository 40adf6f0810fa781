//! AdamW: Adam with weight decay applied directly to the parameters.

use super::head::{Gradients, RegressionHead};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

/// First/second moment accumulators, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(head: &RegressionHead) -> Self {
        let zeros: Vec<Vec<f64>> = head.tensors().map(|t| vec![0.0; t.len()]).collect();
        OptimizerState {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    fn matches(&self, head: &RegressionHead) -> bool {
        self.first.len() == head.tensors().count()
            && head
                .tensors()
                .zip(&self.first)
                .all(|(t, m)| t.len() == m.len())
    }
}

/// One AdamW update:
///
/// ```text
/// θ ← θ·(1 − lr·wd)
/// m ← β1·m + (1 − β1)·g
/// v ← β2·v + (1 − β2)·g²
/// θ ← θ − lr · (m / (1 − β1ᵗ)) / (√(v / (1 − β2ᵗ)) + ε)
/// ```
pub fn adamw_step(
    head: &mut RegressionHead,
    state: &mut OptimizerState,
    grads: &Gradients,
    params: &AdamWParams,
) -> Result<()> {
    if !state.matches(head) || !state.matches(grads) {
        return Err(Error::Shape("optimizer state does not match head".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - params.beta1.powi(t);
    let bias2 = 1.0 - params.beta2.powi(t);
    let decay = 1.0 - params.learning_rate * params.weight_decay;
    let lr = params.learning_rate;

    for (((theta, g), m), v) in head
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..theta.len() {
            theta[i] *= decay;
            m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * g[i];
            v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + params.epsilon);
        }
    }
    Ok(())
}
