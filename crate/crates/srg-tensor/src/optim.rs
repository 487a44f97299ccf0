//! Adam optimizer and the exponential learning-rate schedule.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Exponentially decayed learning rate:
/// `lr(step) = base_lr · decay_base^(step / decay_every)`.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_base: f64,
    pub decay_every: u64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, decay_base: f64, decay_every: u64) -> Self {
        LrSchedule {
            base_lr,
            decay_base,
            decay_every,
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.base_lr
            * self
                .decay_base
                .powf(step as f64 / self.decay_every as f64)
    }
}

/// Per-tensor Adam state (first/second moment estimates).
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f32>,
    v: Vec<f32>,
}

impl AdamState {
    pub fn new(numel: usize) -> Self {
        AdamState {
            m: vec![0.0; numel],
            v: vec![0.0; numel],
        }
    }

    pub fn first_moment(&self) -> &[f32] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f32] {
        &self.v
    }
}

/// Adam with bias correction. One instance drives one list of parameter
/// tensors; `step` must be called with gradients in the same order every time.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    states: Vec<AdamState>,
    t: u64,
}

impl Adam {
    pub fn new(param_sizes: &[usize]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            states: param_sizes.iter().map(|&n| AdamState::new(n)).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn state(&self, idx: usize) -> &AdamState {
        &self.states[idx]
    }

    /// Apply one update to every parameter given matching gradients.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(TensorError::InvalidArgument {
                op: "adam_step",
                detail: format!(
                    "expected {} parameter/gradient tensors, got {}/{}",
                    self.states.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((param, grad), state) in params.iter_mut().zip(grads).zip(&mut self.states) {
            if param.shape() != grad.shape() {
                return Err(TensorError::InvalidArgument {
                    op: "adam_step",
                    detail: format!(
                        "parameter shape {:?} vs gradient shape {:?}",
                        param.shape(),
                        grad.shape()
                    ),
                });
            }
            let pd = param.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i] as f64;
                let m = self.beta1 * state.m[i] as f64 + (1.0 - self.beta1) * g;
                let v = self.beta2 * state.v[i] as f64 + (1.0 - self.beta2) * g * g;
                state.m[i] = m as f32;
                state.v[i] = v as f32;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                pd[i] = (pd[i] as f64 - lr * m_hat / (v_hat.sqrt() + self.eps)) as f32;
            }
        }
        Ok(())
    }
}
