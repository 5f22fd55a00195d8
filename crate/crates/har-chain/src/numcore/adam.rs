//! Adam optimizer with bias-corrected moment estimates.

use crate::numcore::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers for one parameter vector.
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One update step: values -= lr * m_hat / (sqrt(v_hat) + eps).
    pub fn update(&mut self, hp: &AdamParams, values: &mut [f64], grad: &[f64]) {
        assert_eq!(values.len(), grad.len());
        assert_eq!(values.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - hp.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hp.beta2.powi(self.t as i32);
        for i in 0..values.len() {
            let g = grad[i];
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g;
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            values[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
}

/// Adam over a fixed list of parameter tensors. Gradients are taken out of
/// the tensors on each step, so accumulation starts fresh next batch.
pub struct Optimizer {
    hp: AdamParams,
    slots: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(hp: AdamParams, params: &[Tensor]) -> Self {
        let slots = params.iter().map(|p| AdamState::new(p.len())).collect();
        Self { hp, slots }
    }

    pub fn step(&mut self, params: &[Tensor]) {
        assert_eq!(params.len(), self.slots.len());
        for (p, slot) in params.iter().zip(self.slots.iter_mut()) {
            let grad = p.take_grad().unwrap_or_else(|| vec![0.0; p.len()]);
            let mut values = p.to_vec();
            slot.update(&self.hp, &mut values, &grad);
            p.set_values(&values);
        }
    }
}
