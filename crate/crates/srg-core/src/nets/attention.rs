//! Channel + temporal attention gating.
//!
//! Channel gate: average- and max-pooled descriptors over time pass through a
//! shared two-layer MLP; the summed logits gate channels. Temporal gate: the
//! channel-wise average and max sequences are stacked and convolved to gate
//! time steps. Output = input ⊙ channel gate ⊙ temporal gate.

use rand_chacha::ChaCha8Rng;

use super::{he_uniform, zeros};
use crate::error::Result;
use srg_tensor::{Reduce, Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
    /// Temporal gate convolution over the stacked [avg; max] pair, `[1, 2, k]`.
    pub temporal_w: Tensor,
    pub temporal_b: Tensor,
}

impl AttentionParams {
    /// `reduction` divides the channel count for the MLP bottleneck;
    /// `kernel` must be odd so the temporal gate preserves length.
    pub fn init(channels: usize, reduction: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "temporal attention kernel must be odd");
        let hidden = (channels / reduction).max(1);
        AttentionParams {
            fc1_w: he_uniform(rng, &[hidden, channels], channels),
            fc1_b: zeros(&[hidden]),
            fc2_w: he_uniform(rng, &[channels, hidden], hidden),
            fc2_b: zeros(&[channels]),
            temporal_w: he_uniform(rng, &[1, 2, kernel], 2 * kernel),
            temporal_b: zeros(&[1]),
        }
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (format!("{prefix}.fc1_w"), &self.fc1_w),
            (format!("{prefix}.fc1_b"), &self.fc1_b),
            (format!("{prefix}.fc2_w"), &self.fc2_w),
            (format!("{prefix}.fc2_b"), &self.fc2_b),
            (format!("{prefix}.temporal_w"), &self.temporal_w),
            (format!("{prefix}.temporal_b"), &self.temporal_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
            &mut self.temporal_w,
            &mut self.temporal_b,
        ]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> AttentionVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.input(t.clone())
            }
        };
        AttentionVars {
            fc1_w: put(&self.fc1_w),
            fc1_b: put(&self.fc1_b),
            fc2_w: put(&self.fc2_w),
            fc2_b: put(&self.fc2_b),
            temporal_w: put(&self.temporal_w),
            temporal_b: put(&self.temporal_b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub fc1_w: Var,
    pub fc1_b: Var,
    pub fc2_w: Var,
    pub fc2_b: Var,
    pub temporal_w: Var,
    pub temporal_b: Var,
}

impl AttentionVars {
    pub fn all(&self) -> Vec<Var> {
        vec![
            self.fc1_w,
            self.fc1_b,
            self.fc2_w,
            self.fc2_b,
            self.temporal_w,
            self.temporal_b,
        ]
    }
}

pub fn attention_block(tape: &mut Tape, x: Var, params: &AttentionVars) -> Result<Var> {
    // channel gate
    let avg = tape.reduce_rows(x, Reduce::Mean)?;
    let max = tape.reduce_rows(x, Reduce::Max)?;
    let mlp = |tape: &mut Tape, desc: Var| -> Result<Var> {
        let h = tape.linear(params.fc1_w, desc, Some(params.fc1_b))?;
        let h = tape.relu(h);
        Ok(tape.linear(params.fc2_w, h, Some(params.fc2_b))?)
    };
    let logits_avg = mlp(tape, avg)?;
    let logits_max = mlp(tape, max)?;
    let logits = tape.add(logits_avg, logits_max)?;
    let channel_gate = tape.sigmoid(logits);
    let gated = tape.scale_rows(x, channel_gate)?;

    // temporal gate
    let t_avg = tape.reduce_cols(gated, Reduce::Mean)?;
    let t_max = tape.reduce_cols(gated, Reduce::Max)?;
    let stacked = tape.stack_rows(&[t_avg, t_max])?;
    let kernel = tape.value(params.temporal_w).shape()[2];
    let conv = tape.conv1d(stacked, params.temporal_w, 1, (kernel - 1) / 2)?;
    let conv = tape.add_rows(conv, params.temporal_b)?;
    let gate_logits = tape.reduce_cols(conv, Reduce::Mean)?; // [1,T] -> [T]
    let temporal_gate = tape.sigmoid(gate_logits);
    Ok(tape.scale_cols(gated, temporal_gate)?)
}
