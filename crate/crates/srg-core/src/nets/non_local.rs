//! Embedded-Gaussian non-local operation with a residual connection:
//! `out = x + W_out · (g(x) · softmax(θ(x)ᵀ φ(x))ᵀ)`.

use rand_chacha::ChaCha8Rng;

use super::he_uniform;
use crate::error::Result;
use srg_tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct NonLocalParams {
    pub theta: Tensor,
    pub phi: Tensor,
    pub g: Tensor,
    /// Projection back to the input channel count; zero here makes the whole
    /// operation the identity.
    pub out: Tensor,
}

impl NonLocalParams {
    /// Inner embedding width is half the channel count (floored, min 1).
    pub fn init(channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let inner = (channels / 2).max(1);
        NonLocalParams {
            theta: he_uniform(rng, &[inner, channels], channels),
            phi: he_uniform(rng, &[inner, channels], channels),
            g: he_uniform(rng, &[inner, channels], channels),
            out: he_uniform(rng, &[channels, inner], inner),
        }
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (format!("{prefix}.theta"), &self.theta),
            (format!("{prefix}.phi"), &self.phi),
            (format!("{prefix}.g"), &self.g),
            (format!("{prefix}.out"), &self.out),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.theta, &mut self.phi, &mut self.g, &mut self.out]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> NonLocalVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.input(t.clone())
            }
        };
        NonLocalVars {
            theta: put(&self.theta),
            phi: put(&self.phi),
            g: put(&self.g),
            out: put(&self.out),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NonLocalVars {
    pub theta: Var,
    pub phi: Var,
    pub g: Var,
    pub out: Var,
}

impl NonLocalVars {
    pub fn all(&self) -> Vec<Var> {
        vec![self.theta, self.phi, self.g, self.out]
    }
}

pub fn non_local(tape: &mut Tape, x: Var, params: &NonLocalVars) -> Result<Var> {
    let theta = tape.matmul(params.theta, x)?;
    let phi = tape.matmul(params.phi, x)?;
    let g = tape.matmul(params.g, x)?;
    let theta_t = tape.transpose(theta)?;
    let scores = tape.matmul(theta_t, phi)?; // [T,T], row = query position
    let attn = tape.softmax_rows(scores)?;
    let attn_t = tape.transpose(attn)?;
    let mixed = tape.matmul(g, attn_t)?; // [inner, T]
    let projected = tape.matmul(params.out, mixed)?;
    Ok(tape.add(x, projected)?)
}

/// The pairwise attention matrix alone, for diagnostics and tests.
pub fn non_local_attention(tape: &mut Tape, x: Var, params: &NonLocalVars) -> Result<Var> {
    let theta = tape.matmul(params.theta, x)?;
    let phi = tape.matmul(params.phi, x)?;
    let theta_t = tape.transpose(theta)?;
    let scores = tape.matmul(theta_t, phi)?;
    Ok(tape.softmax_rows(scores)?)
}
