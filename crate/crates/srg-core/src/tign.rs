//! Temporal Interval Generation Network.
//!
//! Per-stream attention blocks feed a channel concatenation into the trunk
//! block (pyramid non-local, or conv/max-pool for ablation); three conv heads
//! then score every reference snippet against its neighborhood: a sigmoid
//! relatedness map plus row-softmax starting and ending maps.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, FeatureSequence, LabelMaps};
use crate::error::{CoreError, Result};
use crate::nets::{
    attention_block, block_forward, AttentionParams, AttentionVars, BlockKind, BlockParams,
    BlockVars, CmParams, PnParams,
};
use crate::seed::{self, tags};
use srg_tensor::{Adam, LrSchedule, Tape, Tensor, Var};

/// Architecture hyper-parameters. Head widths follow the neighbor window:
/// relatedness `2·n_nbr + 1`, starting/ending `n_nbr + 2`.
#[derive(Debug, Clone)]
pub struct TignConfig {
    pub appearance_dim: usize,
    pub motion_dim: usize,
    pub n_nbr: usize,
    pub block: BlockKind,
    pub pn_levels: Vec<(usize, usize)>,
    pub trunk_channels: usize,
    pub fuse_channels: usize,
    pub attn_reduction: usize,
    pub attn_kernel: usize,
    /// Kernel width of the three output-head convolutions (odd).
    pub head_kernel: usize,
}

impl TignConfig {
    pub fn relatedness_width(&self) -> usize {
        2 * self.n_nbr + 1
    }

    pub fn boundary_width(&self) -> usize {
        self.n_nbr + 2
    }
}

#[derive(Debug, Clone)]
pub struct TignParams {
    pub config: TignConfig,
    pub attn_appearance: AttentionParams,
    pub attn_motion: AttentionParams,
    pub block: BlockParams,
    pub head_r_w: Tensor,
    pub head_r_b: Tensor,
    pub head_s_w: Tensor,
    pub head_s_b: Tensor,
    pub head_e_w: Tensor,
    pub head_e_b: Tensor,
}

impl TignParams {
    pub fn init(config: TignConfig, seed: u64) -> Self {
        let mut rng = seed::rng(seed, tags::TIGN_INIT);
        Self::init_with_rng(config, &mut rng)
    }

    pub fn init_with_rng(config: TignConfig, rng: &mut ChaCha8Rng) -> Self {
        assert!(config.head_kernel % 2 == 1, "head kernel must be odd");
        let concat = config.appearance_dim + config.motion_dim;
        let block = match config.block {
            BlockKind::Pn => BlockParams::Pn(PnParams::init(
                concat,
                config.trunk_channels,
                config.fuse_channels,
                &config.pn_levels,
                rng,
            )),
            BlockKind::Cm => BlockParams::Cm(CmParams::init(
                concat,
                config.trunk_channels,
                config.fuse_channels,
                rng,
            )),
        };
        let cf = config.fuse_channels;
        let k = config.head_kernel;
        let (head_r_w, head_r_b) =
            crate::nets::init_conv_head(rng, config.relatedness_width(), cf, k);
        let (head_s_w, head_s_b) = crate::nets::init_conv_head(rng, config.boundary_width(), cf, k);
        let (head_e_w, head_e_b) = crate::nets::init_conv_head(rng, config.boundary_width(), cf, k);
        TignParams {
            attn_appearance: AttentionParams::init(
                config.appearance_dim,
                config.attn_reduction,
                config.attn_kernel,
                rng,
            ),
            attn_motion: AttentionParams::init(
                config.motion_dim,
                config.attn_reduction,
                config.attn_kernel,
                rng,
            ),
            block,
            head_r_w,
            head_r_b,
            head_s_w,
            head_s_b,
            head_e_w,
            head_e_b,
            config,
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.attn_appearance.named_tensors("tign.attn_a");
        out.extend(self.attn_motion.named_tensors("tign.attn_m"));
        out.extend(self.block.named_tensors("tign.block"));
        out.push(("tign.head_r_w".into(), &self.head_r_w));
        out.push(("tign.head_r_b".into(), &self.head_r_b));
        out.push(("tign.head_s_w".into(), &self.head_s_w));
        out.push(("tign.head_s_b".into(), &self.head_s_b));
        out.push(("tign.head_e_w".into(), &self.head_e_w));
        out.push(("tign.head_e_b".into(), &self.head_e_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.attn_appearance.tensors_mut();
        out.extend(self.attn_motion.tensors_mut());
        out.extend(self.block.tensors_mut());
        out.push(&mut self.head_r_w);
        out.push(&mut self.head_r_b);
        out.push(&mut self.head_s_w);
        out.push(&mut self.head_s_b);
        out.push(&mut self.head_e_w);
        out.push(&mut self.head_e_b);
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> TignVars {
        let attn_a = self.attn_appearance.bind(tape, trainable);
        let attn_m = self.attn_motion.bind(tape, trainable);
        let block = self.block.bind(tape, trainable);
        let mut put = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.input(t.clone())
            }
        };
        TignVars {
            attn_a,
            attn_m,
            block,
            head_r_w: put(&self.head_r_w),
            head_r_b: put(&self.head_r_b),
            head_s_w: put(&self.head_s_w),
            head_s_b: put(&self.head_s_b),
            head_e_w: put(&self.head_e_w),
            head_e_b: put(&self.head_e_b),
            head_kernel: self.config.head_kernel,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let named = self.named_tensors();
        srg_tensor::checkpoint::save_checkpoint(path, &named)?;
        Ok(())
    }

    /// Load tensors by name into an architecture built from `config`.
    pub fn load(path: &Path, config: TignConfig, seed: u64) -> Result<Self> {
        let mut params = Self::init(config, seed);
        let loaded = srg_tensor::checkpoint::load_checkpoint(path)?;
        fill_named(&mut params.tensors_mut_named(), loaded, "tign")?;
        Ok(params)
    }

    fn tensors_mut_named(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = self.named_tensors().iter().map(|(n, _)| n.clone()).collect();
        names.into_iter().zip(self.tensors_mut()).collect()
    }
}

/// Fill parameter tensors from a loaded checkpoint, by exact name.
pub(crate) fn fill_named(
    targets: &mut [(String, &mut Tensor)],
    loaded: Vec<(String, Tensor)>,
    what: &str,
) -> Result<()> {
    let mut map: std::collections::BTreeMap<String, Tensor> = loaded.into_iter().collect();
    for (name, slot) in targets.iter_mut() {
        let tensor = map.remove(name).ok_or_else(|| {
            CoreError::Validation(format!("checkpoint is missing tensor {name} for {what}"))
        })?;
        if tensor.shape() != slot.shape() {
            return Err(CoreError::Validation(format!(
                "checkpoint tensor {name}: shape {:?} does not match configured {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        **slot = tensor;
    }
    if let Some((name, _)) = map.iter().next() {
        return Err(CoreError::Validation(format!(
            "checkpoint contains unknown tensor {name} for {what}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TignVars {
    pub attn_a: AttentionVars,
    pub attn_m: AttentionVars,
    pub block: BlockVars,
    pub head_r_w: Var,
    pub head_r_b: Var,
    pub head_s_w: Var,
    pub head_s_b: Var,
    pub head_e_w: Var,
    pub head_e_b: Var,
    head_kernel: usize,
}

impl TignVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.attn_a.all();
        out.extend(self.attn_m.all());
        out.extend(self.block.all());
        out.extend([
            self.head_r_w,
            self.head_r_b,
            self.head_s_w,
            self.head_s_b,
            self.head_e_w,
            self.head_e_b,
        ]);
        out
    }
}

/// Score-map handles on a tape; rows are reference snippets.
#[derive(Debug, Clone, Copy)]
pub struct TignOutputs {
    pub relatedness: Var,
    pub starting: Var,
    pub ending: Var,
}

/// Plain-tensor score maps, off the tape.
#[derive(Debug, Clone)]
pub struct ScoreMaps {
    pub relatedness: Tensor,
    pub starting: Tensor,
    pub ending: Tensor,
    pub n_nbr: usize,
}

impl ScoreMaps {
    pub fn snippet_count(&self) -> usize {
        self.relatedness.shape()[0]
    }

    /// Row-stochasticity and range checks; tolerance 1e-5 on row sums.
    pub fn validate(&self) -> Result<()> {
        for v in self.relatedness.data() {
            if !(*v > 0.0 && *v < 1.0) {
                return Err(CoreError::Validation(format!(
                    "relatedness value {v} outside (0,1)"
                )));
            }
        }
        for (name, map) in [("starting", &self.starting), ("ending", &self.ending)] {
            let (rows, cols) = map.dims2("score_maps")?;
            for r in 0..rows {
                let sum: f32 = (0..cols).map(|c| map.at2(r, c)).sum();
                if (sum - 1.0).abs() > 1e-5 {
                    return Err(CoreError::Validation(format!(
                        "{name} row {r} sums to {sum}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Full-sequence forward pass: one invocation scores every reference snippet.
pub fn tign_forward(tape: &mut Tape, vars: &TignVars, features: &FeatureSequence) -> Result<TignOutputs> {
    let x_a = tape.input(features.appearance.clone());
    let x_m = tape.input(features.motion.clone());
    tign_forward_vars(tape, vars, x_a, x_m)
}

/// Forward over already-bound feature vars (lets tests push gradients
/// through the inputs).
pub fn tign_forward_vars(
    tape: &mut Tape,
    vars: &TignVars,
    appearance: Var,
    motion: Var,
) -> Result<TignOutputs> {
    let a = attention_block(tape, appearance, &vars.attn_a)?;
    let m = attention_block(tape, motion, &vars.attn_m)?;
    let x = tape.concat_rows(&[a, m])?;
    let trunk = block_forward(tape, x, &vars.block, true)?;
    let pad = (vars.head_kernel - 1) / 2;
    let head = |tape: &mut Tape, w: Var, b: Var| -> Result<Var> {
        let conv = tape.conv1d(trunk, w, 1, pad)?;
        let conv = tape.add_rows(conv, b)?;
        Ok(tape.transpose(conv)?)
    };
    let r_logits = head(tape, vars.head_r_w, vars.head_r_b)?;
    let s_logits = head(tape, vars.head_s_w, vars.head_s_b)?;
    let e_logits = head(tape, vars.head_e_w, vars.head_e_b)?;
    Ok(TignOutputs {
        relatedness: tape.sigmoid(r_logits),
        starting: tape.softmax_rows(s_logits)?,
        ending: tape.softmax_rows(e_logits)?,
    })
}

/// Extract plain score maps from a finished forward pass.
pub fn score_maps(tape: &Tape, outputs: &TignOutputs, n_nbr: usize) -> ScoreMaps {
    ScoreMaps {
        relatedness: tape.value(outputs.relatedness).clone(),
        starting: tape.value(outputs.starting).clone(),
        ending: tape.value(outputs.ending).clone(),
        n_nbr,
    }
}

/// Convenience: forward a video with frozen parameters and return the maps.
pub fn infer_score_maps(params: &TignParams, features: &FeatureSequence) -> Result<ScoreMaps> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, false);
    let outputs = tign_forward(&mut tape, &vars, features)?;
    Ok(score_maps(&tape, &outputs, params.config.n_nbr))
}

/// Multi-task loss: masked binary cross-entropy on relatedness plus row-mean
/// cross-entropy on each boundary map.
pub fn tign_loss(tape: &mut Tape, outputs: &TignOutputs, labels: &LabelMaps) -> Result<Var> {
    let m_r = tape.input(labels.relatedness.clone());
    let valid = tape.input(labels.valid_r.clone());
    let m_s = tape.input(labels.starting.clone());
    let m_e = tape.input(labels.ending.clone());
    let l_r = tape.bce_masked_mean(outputs.relatedness, m_r, valid)?;
    let l_s = tape.ce_rows_mean(outputs.starting, m_s)?;
    let l_e = tape.ce_rows_mean(outputs.ending, m_e)?;
    let partial = tape.add(l_r, l_s)?;
    Ok(tape.add(partial, l_e)?)
}

#[derive(Debug, Clone, Copy)]
pub struct TignTrainConfig {
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

/// Per-epoch mean losses from a training run.
pub type LossHistory = Vec<f64>;

/// Train on whole videos, batch size one video, Adam with exponential decay.
pub fn train_tign(
    dataset: &Dataset,
    params: &mut TignParams,
    train: &TignTrainConfig,
) -> Result<LossHistory> {
    if dataset.is_empty() {
        return Err(CoreError::Argument("training dataset is empty".into()));
    }
    let n_nbr = params.config.n_nbr;
    let labels: Vec<LabelMaps> = dataset
        .videos
        .iter()
        .map(|v| crate::data::annotate_label_maps(&v.instances, v.meta.snippet_count, n_nbr))
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = params.tensors_mut().iter().map(|t| t.numel()).collect();
    let mut adam = Adam::new(&sizes);
    let mut rng = seed::rng(train.seed, tags::TIGN_TRAIN);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(train.epochs);
    let mut step = 0u64;
    for _epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for &vi in &order {
            let video = &dataset.videos[vi];
            let mut tape = Tape::new();
            let vars = params.bind(&mut tape, true);
            let outputs = tign_forward(&mut tape, &vars, &video.features)?;
            let loss = tign_loss(&mut tape, &outputs, &labels[vi])?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(CoreError::Training {
                    step,
                    detail: format!("loss is not finite ({loss_value})"),
                });
            }
            let grads = tape.backward(loss)?;
            let grad_tensors: Vec<Tensor> =
                vars.all().iter().map(|&v| grads.of(v, &tape)).collect();
            let mut slots = params.tensors_mut();
            adam.step(&mut slots, &grad_tensors, train.schedule.lr_at(step))?;
            step += 1;
            epoch_loss += loss_value as f64;
        }
        history.push(epoch_loss / order.len() as f64);
    }
    Ok(history)
}

pub const SCORE_MAP_MAGIC: [u8; 4] = *b"SRGM";
pub const SCORE_MAP_VERSION: u32 = 1;

/// Binary score-map dump for visualization tooling.
pub fn save_score_maps(path: &Path, maps: &ScoreMaps) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&SCORE_MAP_MAGIC)?;
    w.write_all(&SCORE_MAP_VERSION.to_le_bytes())?;
    w.write_all(&(maps.snippet_count() as u32).to_le_bytes())?;
    w.write_all(&(maps.n_nbr as u32).to_le_bytes())?;
    for map in [&maps.relatedness, &maps.starting, &maps.ending] {
        for &v in map.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_score_maps(path: &Path) -> Result<ScoreMaps> {
    use std::io::Read;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |offset: usize, detail: &str| CoreError::FeatureParse {
        offset: offset as u64,
        detail: detail.into(),
    };
    if bytes.len() < 16 {
        return Err(fail(bytes.len(), "truncated header"));
    }
    if bytes[0..4] != SCORE_MAP_MAGIC {
        return Err(fail(0, "bad magic, expected \"SRGM\""));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    if u32_at(4) != SCORE_MAP_VERSION as usize {
        return Err(fail(4, "unsupported version"));
    }
    let rows = u32_at(8);
    let n_nbr = u32_at(12);
    let w_r = 2 * n_nbr + 1;
    let w_b = n_nbr + 2;
    let expected = 16 + 4 * rows * (w_r + 2 * w_b);
    if bytes.len() != expected {
        return Err(fail(bytes.len().min(expected), "score map size mismatch"));
    }
    let mut cursor = 16usize;
    let mut read_map = |r: usize, c: usize| -> Tensor {
        let mut data = vec![0.0f32; r * c];
        for v in data.iter_mut() {
            *v = f32::from_le_bytes(bytes[cursor..cursor + 4].try_into().unwrap());
            cursor += 4;
        }
        Tensor::new(vec![r, c], data).expect("shape")
    };
    Ok(ScoreMaps {
        relatedness: read_map(rows, w_r),
        starting: read_map(rows, w_b),
        ending: read_map(rows, w_b),
        n_nbr,
    })
}
