//! Pyramid non-local block and its conv/max-pool ablation counterpart.
//!
//! PN: a stride-1 conv trunk feeds one non-local branch per pyramid level
//! (average pool → non-local → linear upsample back to the trunk length) plus
//! a full-length residual non-local branch; branches concatenate channel-wise
//! into a fusing convolution.

use rand_chacha::ChaCha8Rng;

use super::non_local::{non_local, NonLocalParams, NonLocalVars};
use super::{he_uniform, zeros};
use crate::error::{CoreError, Result};
use srg_tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Pn,
    Cm,
}

impl std::fmt::Display for BlockKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlockKind::Pn => write!(f, "pn"),
            BlockKind::Cm => write!(f, "cm"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PnParams {
    pub trunk1_w: Tensor,
    pub trunk1_b: Tensor,
    pub trunk2_w: Tensor,
    pub trunk2_b: Tensor,
    /// (kernel, stride) per pyramid level.
    pub levels: Vec<(usize, usize)>,
    pub level_nl: Vec<NonLocalParams>,
    pub residual_nl: NonLocalParams,
    pub fuse_w: Tensor,
    pub fuse_b: Tensor,
}

impl PnParams {
    pub fn init(
        in_channels: usize,
        trunk_channels: usize,
        fuse_channels: usize,
        levels: &[(usize, usize)],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let level_nl = levels
            .iter()
            .map(|_| NonLocalParams::init(trunk_channels, rng))
            .collect();
        let branches = levels.len() + 1;
        PnParams {
            trunk1_w: he_uniform(rng, &[trunk_channels, in_channels, 3], in_channels * 3),
            trunk1_b: zeros(&[trunk_channels]),
            trunk2_w: he_uniform(rng, &[trunk_channels, trunk_channels, 3], trunk_channels * 3),
            trunk2_b: zeros(&[trunk_channels]),
            levels: levels.to_vec(),
            level_nl,
            residual_nl: NonLocalParams::init(trunk_channels, rng),
            fuse_w: he_uniform(
                rng,
                &[fuse_channels, branches * trunk_channels, 3],
                branches * trunk_channels * 3,
            ),
            fuse_b: zeros(&[fuse_channels]),
        }
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            (format!("{prefix}.trunk1_w"), &self.trunk1_w),
            (format!("{prefix}.trunk1_b"), &self.trunk1_b),
            (format!("{prefix}.trunk2_w"), &self.trunk2_w),
            (format!("{prefix}.trunk2_b"), &self.trunk2_b),
        ];
        for (idx, nl) in self.level_nl.iter().enumerate() {
            out.extend(nl.named_tensors(&format!("{prefix}.level{idx}")));
        }
        out.extend(self.residual_nl.named_tensors(&format!("{prefix}.residual")));
        out.push((format!("{prefix}.fuse_w"), &self.fuse_w));
        out.push((format!("{prefix}.fuse_b"), &self.fuse_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.trunk1_w,
            &mut self.trunk1_b,
            &mut self.trunk2_w,
            &mut self.trunk2_b,
        ];
        for nl in &mut self.level_nl {
            out.extend(nl.tensors_mut());
        }
        out.extend(self.residual_nl.tensors_mut());
        out.push(&mut self.fuse_w);
        out.push(&mut self.fuse_b);
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> PnVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.input(t.clone())
            }
        };
        let trunk1_w = put(&self.trunk1_w);
        let trunk1_b = put(&self.trunk1_b);
        let trunk2_w = put(&self.trunk2_w);
        let trunk2_b = put(&self.trunk2_b);
        drop(put);
        let level_nl: Vec<NonLocalVars> = self
            .level_nl
            .iter()
            .map(|nl| nl.bind(tape, trainable))
            .collect();
        let residual_nl = self.residual_nl.bind(tape, trainable);
        let fuse_w = if trainable {
            tape.param(self.fuse_w.clone())
        } else {
            tape.input(self.fuse_w.clone())
        };
        let fuse_b = if trainable {
            tape.param(self.fuse_b.clone())
        } else {
            tape.input(self.fuse_b.clone())
        };
        PnVars {
            trunk1_w,
            trunk1_b,
            trunk2_w,
            trunk2_b,
            levels: self.levels.clone(),
            level_nl,
            residual_nl,
            fuse_w,
            fuse_b,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PnVars {
    pub trunk1_w: Var,
    pub trunk1_b: Var,
    pub trunk2_w: Var,
    pub trunk2_b: Var,
    pub levels: Vec<(usize, usize)>,
    pub level_nl: Vec<NonLocalVars>,
    pub residual_nl: NonLocalVars,
    pub fuse_w: Var,
    pub fuse_b: Var,
}

impl PnVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.trunk1_w, self.trunk1_b, self.trunk2_w, self.trunk2_b];
        for nl in &self.level_nl {
            out.extend(nl.all());
        }
        out.extend(self.residual_nl.all());
        out.push(self.fuse_w);
        out.push(self.fuse_b);
        out
    }
}

fn conv3_relu(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let c = tape.conv1d(x, w, 1, 1)?;
    let c = tape.add_rows(c, b)?;
    Ok(tape.relu(c))
}

/// Pyramid non-local forward; output length equals the input length.
pub fn pn_block(tape: &mut Tape, x: Var, params: &PnVars) -> Result<Var> {
    let t = tape.value(x).shape()[1];
    for (idx, &(kernel, stride)) in params.levels.iter().enumerate() {
        if kernel > t {
            return Err(CoreError::Config(format!(
                "pyramid level {idx} kernel {kernel} exceeds sequence length {t}"
            )));
        }
        if stride == 0 {
            return Err(CoreError::Config(format!("pyramid level {idx} stride is 0")));
        }
    }
    let u = conv3_relu(tape, x, params.trunk1_w, params.trunk1_b)?;
    let u = conv3_relu(tape, u, params.trunk2_w, params.trunk2_b)?;
    let mut branches = Vec::with_capacity(params.levels.len() + 1);
    for (&(kernel, stride), nl) in params.levels.iter().zip(&params.level_nl) {
        let pooled = tape.avg_pool1d(u, kernel, stride)?;
        let mixed = non_local(tape, pooled, nl)?;
        branches.push(tape.resample_linear(mixed, t)?);
    }
    branches.push(non_local(tape, u, &params.residual_nl)?);
    let cat = tape.concat_rows(&branches)?;
    conv3_relu(tape, cat, params.fuse_w, params.fuse_b)
}

/// Two conv + max-pool pairs; the ablation replacement for the PN block.
#[derive(Debug, Clone)]
pub struct CmParams {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
}

impl CmParams {
    pub fn init(
        in_channels: usize,
        trunk_channels: usize,
        fuse_channels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        CmParams {
            conv1_w: he_uniform(rng, &[trunk_channels, in_channels, 3], in_channels * 3),
            conv1_b: zeros(&[trunk_channels]),
            conv2_w: he_uniform(rng, &[fuse_channels, trunk_channels, 3], trunk_channels * 3),
            conv2_b: zeros(&[fuse_channels]),
        }
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (format!("{prefix}.conv1_w"), &self.conv1_w),
            (format!("{prefix}.conv1_b"), &self.conv1_b),
            (format!("{prefix}.conv2_w"), &self.conv2_w),
            (format!("{prefix}.conv2_b"), &self.conv2_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
        ]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> CmVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.input(t.clone())
            }
        };
        CmVars {
            conv1_w: put(&self.conv1_w),
            conv1_b: put(&self.conv1_b),
            conv2_w: put(&self.conv2_w),
            conv2_b: put(&self.conv2_b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CmVars {
    pub conv1_w: Var,
    pub conv1_b: Var,
    pub conv2_w: Var,
    pub conv2_b: Var,
}

impl CmVars {
    pub fn all(&self) -> Vec<Var> {
        vec![self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b]
    }
}

/// CM forward. `restore_len` resamples the pooled sequence back to the input
/// length for consumers that need per-snippet resolution.
pub fn cm_block(tape: &mut Tape, x: Var, params: &CmVars, restore_len: bool) -> Result<Var> {
    let t = tape.value(x).shape()[1];
    if t < 4 {
        return Err(CoreError::Config(format!(
            "cm block needs at least 4 snippets, got {t}"
        )));
    }
    let h = conv3_relu(tape, x, params.conv1_w, params.conv1_b)?;
    let h = tape.max_pool1d(h, 2, 2)?;
    let h = conv3_relu(tape, h, params.conv2_w, params.conv2_b)?;
    let h = tape.max_pool1d(h, 2, 2)?;
    if restore_len {
        Ok(tape.resample_linear(h, t)?)
    } else {
        Ok(h)
    }
}

/// Either trunk block, selected by configuration.
#[derive(Debug, Clone)]
pub enum BlockParams {
    Pn(PnParams),
    Cm(CmParams),
}

impl BlockParams {
    pub fn kind(&self) -> BlockKind {
        match self {
            BlockParams::Pn(_) => BlockKind::Pn,
            BlockParams::Cm(_) => BlockKind::Cm,
        }
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        match self {
            BlockParams::Pn(p) => p.named_tensors(prefix),
            BlockParams::Cm(p) => p.named_tensors(prefix),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            BlockParams::Pn(p) => p.tensors_mut(),
            BlockParams::Cm(p) => p.tensors_mut(),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BlockVars {
        match self {
            BlockParams::Pn(p) => BlockVars::Pn(p.bind(tape, trainable)),
            BlockParams::Cm(p) => BlockVars::Cm(p.bind(tape, trainable)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum BlockVars {
    Pn(PnVars),
    Cm(CmVars),
}

impl BlockVars {
    pub fn all(&self) -> Vec<Var> {
        match self {
            BlockVars::Pn(v) => v.all(),
            BlockVars::Cm(v) => v.all(),
        }
    }
}

pub fn block_forward(tape: &mut Tape, x: Var, block: &BlockVars, restore_len: bool) -> Result<Var> {
    match block {
        BlockVars::Pn(v) => pn_block(tape, x, v),
        BlockVars::Cm(v) => cm_block(tape, x, v, restore_len),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use srg_tensor::pool_out_len;

    #[test]
    fn branch_lengths_follow_pool_arithmetic() {
        assert_eq!(pool_out_len(15, 3, 1), 13);
        assert_eq!(pool_out_len(15, 5, 3), 4);
        // and both upsample targets are the trunk length, checked via forward
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = PnParams::init(4, 6, 5, &[(3, 1), (5, 3)], &mut rng);
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape, false);
        let x = tape.input(Tensor::from_fn(&[4, 15], |_| rng.gen_range(-1.0..1.0)));
        let y = pn_block(&mut tape, x, &vars).unwrap();
        assert_eq!(tape.value(y).shape(), &[5, 15]);
    }

    #[test]
    fn oversized_kernel_names_the_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = PnParams::init(4, 6, 5, &[(3, 1), (15, 7)], &mut rng);
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape, false);
        let x = tape.input(Tensor::zeros(&[4, 10]));
        let err = pn_block(&mut tape, x, &vars).unwrap_err();
        assert!(err.to_string().contains("level 1"), "{err}");
    }

    #[test]
    fn degenerate_pyramid_with_zero_nl_reproduces_trunk() {
        // single (1,1) level, zeroed non-local projections, and a fuse conv
        // that passes the level branch straight through
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let channels = 3;
        let mut params = PnParams::init(channels, channels, channels, &[(1, 1)], &mut rng);
        for nl in params.level_nl.iter_mut() {
            nl.out = Tensor::zeros(&[channels, (channels / 2).max(1)]);
        }
        params.residual_nl.out = Tensor::zeros(&[channels, (channels / 2).max(1)]);
        // identity trunk: pass-through kernels
        let ident = |c_in: usize| {
            Tensor::from_fn(&[channels, c_in, 3], |i| {
                let (o, rest) = (i / (c_in * 3), i % (c_in * 3));
                let (c, k) = (rest / 3, rest % 3);
                if o == c && k == 1 {
                    1.0
                } else {
                    0.0
                }
            })
        };
        params.trunk1_w = ident(channels);
        params.trunk2_w = ident(channels);
        // fuse: take the first branch (level) only, center tap
        params.fuse_w = Tensor::from_fn(&[channels, 2 * channels, 3], |i| {
            let (o, rest) = (i / (2 * channels * 3), i % (2 * channels * 3));
            let (c, k) = (rest / 3, rest % 3);
            if o == c && k == 1 {
                1.0
            } else {
                0.0
            }
        });
        let x_val = Tensor::from_fn(&[channels, 8], |i| ((i * 13) % 7) as f32 * 0.2 + 0.1);
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape, false);
        let x = tape.input(x_val.clone());
        let y = pn_block(&mut tape, x, &vars).unwrap();
        // trunk is identity (positive input), NL contributes zero, fuse picks
        // the branch verbatim, so output == input
        for (a, b) in tape.value(y).data().iter().zip(x_val.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn permuting_branches_with_matching_fuse_permutation_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (c_in, ct, cf) = (4, 5, 6);
        let levels = [(3usize, 1usize), (5, 3), (7, 5)];
        let params = PnParams::init(c_in, ct, cf, &levels, &mut rng);
        let x_val = Tensor::from_fn(&[c_in, 23], |_| rng.gen_range(-1.5..1.5));

        let forward = |p: &PnParams| -> Vec<f32> {
            let mut tape = Tape::new();
            let vars = p.bind(&mut tape, false);
            let x = tape.input(x_val.clone());
            let y = pn_block(&mut tape, x, &vars).unwrap();
            tape.value(y).data().to_vec()
        };
        let base = forward(&params);

        // swap levels 0 and 2 and permute the fuse kernel's input-channel
        // blocks identically (residual branch stays last)
        let mut permuted = params.clone();
        permuted.levels.swap(0, 2);
        permuted.level_nl.swap(0, 2);
        let block = |branch: usize| -> Vec<usize> {
            (branch * ct..(branch + 1) * ct).collect()
        };
        let mut order: Vec<usize> = Vec::new();
        order.extend(block(2));
        order.extend(block(1));
        order.extend(block(0));
        order.extend(block(3));
        let src = &params.fuse_w;
        permuted.fuse_w = Tensor::from_fn(&[cf, 4 * ct, 3], |i| {
            let (o, rest) = (i / (4 * ct * 3), i % (4 * ct * 3));
            let (c, k) = (rest / 3, rest % 3);
            src.data()[(o * 4 * ct + order[c]) * 3 + k]
        });
        let swapped = forward(&permuted);
        for (a, b) in base.iter().zip(&swapped) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn cm_block_halves_twice_and_can_restore() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = CmParams::init(4, 6, 5, &mut rng);
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape, false);
        let x = tape.input(Tensor::from_fn(&[4, 21], |_| rng.gen_range(-1.0..1.0)));
        let pooled = cm_block(&mut tape, x, &vars, false).unwrap();
        assert_eq!(tape.value(pooled).shape(), &[5, 5]);
        let restored = cm_block(&mut tape, x, &vars, true).unwrap();
        assert_eq!(tape.value(restored).shape(), &[5, 21]);
    }
}
