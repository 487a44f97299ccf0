//! Fused loss reductions. Probabilities are clamped to `[EPS, 1-EPS]` before
//! any logarithm.

use super::{Tape, Var};
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Probability clamp applied inside the cross-entropy losses.
pub const PROB_EPS: f32 = 1e-7;

#[inline]
fn clamp_prob(p: f32) -> f64 {
    (p as f64).clamp(PROB_EPS as f64, 1.0 - PROB_EPS as f64)
}

impl Tape {
    /// Binary cross-entropy between probabilities `o` and binary labels `m`,
    /// averaged over cells where `mask` is nonzero.
    pub fn bce_masked_mean(&mut self, o: Var, labels: Var, mask: Var) -> Result<Var> {
        let (n, w) = self.value(o).dims2("bce_masked_mean")?;
        for (name, v) in [("labels", labels), ("mask", mask)] {
            if self.value(v).shape() != [n, w] {
                return Err(TensorError::InvalidArgument {
                    op: "bce_masked_mean",
                    detail: format!(
                        "{name} shape {:?} does not match predictions [{n}, {w}]",
                        self.value(v).shape()
                    ),
                });
            }
        }
        let od = self.value(o).data();
        let md = self.value(labels).data();
        let kd = self.value(mask).data();
        let valid: f64 = kd.iter().map(|&v| if v != 0.0 { 1.0 } else { 0.0 }).sum();
        if valid == 0.0 {
            return Err(TensorError::InvalidArgument {
                op: "bce_masked_mean",
                detail: "mask selects no cells".into(),
            });
        }
        let mut acc = 0.0f64;
        for i in 0..n * w {
            if kd[i] == 0.0 {
                continue;
            }
            let p = clamp_prob(od[i]);
            let m = md[i] as f64;
            acc += m * p.ln() + (1.0 - m) * (1.0 - p).ln();
        }
        let loss = (-acc / valid) as f32;
        let no = self.needs_grad(o);
        Ok(self.push_op(
            Tensor::scalar(loss),
            no,
            Box::new(move |tape, g| {
                let od = tape.value(o).data();
                let md = tape.value(labels).data();
                let kd = tape.value(mask).data();
                let scale = g.item() as f64 / valid;
                let mut dx = vec![0.0f32; n * w];
                for i in 0..n * w {
                    if kd[i] == 0.0 {
                        continue;
                    }
                    let p = clamp_prob(od[i]);
                    let m = md[i] as f64;
                    dx[i] = (scale * (-(m / p) + (1.0 - m) / (1.0 - p))) as f32;
                }
                vec![(o, Tensor::new(vec![n, w], dx).expect("shape"))]
            }),
        ))
    }

    /// Multi-class cross-entropy of row-stochastic predictions against one-hot
    /// label rows, averaged over rows.
    pub fn ce_rows_mean(&mut self, o: Var, labels: Var) -> Result<Var> {
        let (n, w) = self.value(o).dims2("ce_rows_mean")?;
        if self.value(labels).shape() != [n, w] {
            return Err(TensorError::InvalidArgument {
                op: "ce_rows_mean",
                detail: format!(
                    "labels shape {:?} does not match predictions [{n}, {w}]",
                    self.value(labels).shape()
                ),
            });
        }
        let od = self.value(o).data();
        let md = self.value(labels).data();
        let mut acc = 0.0f64;
        for i in 0..n * w {
            if md[i] != 0.0 {
                acc += md[i] as f64 * clamp_prob(od[i]).ln();
            }
        }
        let loss = (-acc / n as f64) as f32;
        let no = self.needs_grad(o);
        Ok(self.push_op(
            Tensor::scalar(loss),
            no,
            Box::new(move |tape, g| {
                let od = tape.value(o).data();
                let md = tape.value(labels).data();
                let scale = g.item() as f64 / n as f64;
                let mut dx = vec![0.0f32; n * w];
                for i in 0..n * w {
                    if md[i] != 0.0 {
                        dx[i] = (-scale * md[i] as f64 / clamp_prob(od[i])) as f32;
                    }
                }
                vec![(o, Tensor::new(vec![n, w], dx).expect("shape"))]
            }),
        ))
    }

    /// Gated mean absolute error: `(1/N) Σ gate·|pred − target|`. The batch
    /// size N is the full length regardless of how many gates are open.
    pub fn l1_gated_mean(&mut self, pred: Var, target: Var, gate: Var) -> Result<Var> {
        let n = self.value(pred).numel();
        for (name, v) in [("target", target), ("gate", gate)] {
            if self.value(v).shape() != self.value(pred).shape() {
                return Err(TensorError::InvalidArgument {
                    op: "l1_gated_mean",
                    detail: format!(
                        "{name} shape {:?} does not match predictions {:?}",
                        self.value(v).shape(),
                        self.value(pred).shape()
                    ),
                });
            }
        }
        if n == 0 {
            return Err(TensorError::InvalidArgument {
                op: "l1_gated_mean",
                detail: "empty batch".into(),
            });
        }
        let pd = self.value(pred).data();
        let td = self.value(target).data();
        let gd = self.value(gate).data();
        let mut acc = 0.0f64;
        for i in 0..n {
            acc += gd[i] as f64 * (pd[i] as f64 - td[i] as f64).abs();
        }
        let loss = (acc / n as f64) as f32;
        let np = self.needs_grad(pred);
        Ok(self.push_op(
            Tensor::scalar(loss),
            np,
            Box::new(move |tape, g| {
                let pd = tape.value(pred).data();
                let td = tape.value(target).data();
                let gd = tape.value(gate).data();
                let scale = g.item() / n as f32;
                let shape = tape.value(pred).shape().to_vec();
                let dx = Tensor::from_fn(&shape, |i| {
                    let d = pd[i] - td[i];
                    let sign = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    scale * gd[i] * sign
                });
                vec![(pred, dx)]
            }),
        ))
    }
}
