//! Reverse-mode automatic differentiation over a single-writer tape.
//!
//! Every operation appends one node holding its forward value and a backward
//! rule. Nodes only ever reference earlier nodes, so the tape is in
//! topological order by construction and `backward` walks it once in reverse.

mod ops_basic;
mod ops_conv;
mod ops_loss;

pub use ops_basic::Reduce;
pub use ops_conv::{conv_out_len, pool_out_len};
pub use ops_loss::PROB_EPS;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

type BackwardFn = Box<dyn Fn(&Tape, &Tensor) -> Vec<(Var, Tensor)>>;

struct Node {
    value: Tensor,
    backward: Option<BackwardFn>,
    needs_grad: bool,
}

/// Recording of one forward computation.
///
/// A tape is single-writer: one tape per training step, never shared across
/// threads. Forward values stay on the tape so backward rules can read them
/// without cloning.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf that does not require gradients (features, labels).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Insert a leaf parameter; `backward` will produce its gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            backward: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push_op(
        &mut self,
        value: Tensor,
        needs_grad: bool,
        backward: BackwardFn,
    ) -> Var {
        self.nodes.push(Node {
            value,
            backward: if needs_grad { Some(backward) } else { None },
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub(crate) fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Reverse sweep from a scalar loss. Returns per-node gradients for every
    /// node that participated in the loss's ancestry and requires gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if !loss_node.value.is_scalar() {
            return Err(TensorError::InvalidArgument {
                op: "backward",
                detail: format!(
                    "loss must be scalar, got shape {:?}",
                    loss_node.value.shape()
                ),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            if grads[id].is_none() {
                continue;
            }
            if let Some(rule) = &self.nodes[id].backward {
                // Interior gradients are dropped once propagated; only leaf
                // gradients survive the sweep.
                let out_grad = grads[id].take().unwrap();
                for (parent, grad) in rule(self, &out_grad) {
                    debug_assert!(parent.0 < id, "tape order violated");
                    match &mut grads[parent.0] {
                        Some(acc) => acc.add_assign(&grad)?,
                        slot => *slot = Some(grad),
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a parameter leaf; all-zero if the parameter never
    /// influenced the loss.
    pub fn of(&self, v: Var, tape: &Tape) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(v).shape()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2, 2]));
        let err = tape.backward(x).unwrap_err();
        assert!(err.to_string().contains("scalar"));
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![2, 3], vec![1., -2., 3., 0.5, 0., 9.]).unwrap());
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0f32; 6]);
    }

    #[test]
    fn grad_skipped_for_pure_inputs() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::scalar(2.0));
        let y = tape.param(Tensor::scalar(3.0));
        let p = tape.mul(x, y).unwrap();
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(x).is_none());
        assert_eq!(grads.get(y).unwrap().item(), 2.0);
    }
}
