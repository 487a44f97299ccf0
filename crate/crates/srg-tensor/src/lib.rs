//! Dense f32 tensors with reverse-mode automatic differentiation, sized for
//! the SRG temporal-proposal networks: 1-D convolution, temporal pooling,
//! linear resampling, matrix products, row softmax, fused loss reductions,
//! and an Adam optimizer with exponential learning-rate decay.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use optim::{Adam, LrSchedule};
pub use tape::{conv_out_len, pool_out_len, Gradients, Reduce, Tape, Var, PROB_EPS};
pub use tensor::Tensor;
