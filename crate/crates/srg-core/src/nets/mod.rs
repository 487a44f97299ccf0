//! Network building blocks shared by the generation and evaluation networks.

pub mod attention;
pub mod non_local;
pub mod pn;

pub use attention::{attention_block, AttentionParams, AttentionVars};
pub use non_local::{non_local, non_local_attention, NonLocalParams, NonLocalVars};
pub use pn::{
    block_forward, cm_block, pn_block, BlockKind, BlockParams, BlockVars, CmParams, CmVars,
    PnParams, PnVars,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use srg_tensor::Tensor;

/// He-style uniform init: U(−√(6/fan_in), +√(6/fan_in)).
pub(crate) fn he_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let limit = (6.0 / fan_in.max(1) as f64).sqrt() as f32;
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit))
}

pub(crate) fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape)
}

/// Conv head: `filters` output channels over `in_channels` with width
/// `kernel`, zero bias.
pub(crate) fn init_conv_head(
    rng: &mut ChaCha8Rng,
    filters: usize,
    in_channels: usize,
    kernel: usize,
) -> (Tensor, Tensor) {
    (
        he_uniform(rng, &[filters, in_channels, kernel], in_channels * kernel),
        zeros(&[filters]),
    )
}

pub(crate) fn init_fc(rng: &mut ChaCha8Rng, out_dim: usize, in_dim: usize) -> Tensor {
    he_uniform(rng, &[out_dim, in_dim], in_dim)
}
