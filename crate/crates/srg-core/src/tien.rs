//! Temporal Interval Evaluation Network: interval-level features, confidence
//! and boundary-offset prediction, sample mining, loss, and refinement.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, FeatureSequence, GroundTruthInstance};
use crate::error::{CoreError, Result};
use crate::eval::{tiou, Span};
use crate::intervals::{gen_all, TemporalInterval};
use crate::nets::{
    attention_block, block_forward, AttentionParams, AttentionVars, BlockKind, BlockParams,
    BlockVars, CmParams, PnParams,
};
use crate::seed::{self, tags};
use crate::tign::{fill_named, TignParams};
use srg_tensor::{Adam, LrSchedule, Reduce, Tape, Tensor, Var};

/// Interval-level feature pair, rescaled to a fixed temporal length.
#[derive(Debug, Clone)]
pub struct IntervalFeature {
    pub appearance: Tensor,
    pub motion: Tensor,
}

/// Slice `[t_start − l_c, t_end + l_c]` of one stream (edges clamped), then
/// linearly rescale to `l_fix` steps. Differentiable toward the source.
pub fn interval_feature_var(
    tape: &mut Tape,
    stream: Var,
    t_start: usize,
    t_end: usize,
    l_c: usize,
    l_fix: usize,
) -> Result<Var> {
    if l_fix < 2 {
        return Err(CoreError::Argument(format!("l_fix {l_fix} must be >= 2")));
    }
    if t_end < t_start {
        return Err(CoreError::Argument(format!(
            "interval end {t_end} before start {t_start}"
        )));
    }
    let len = tape.value(stream).shape()[1];
    let lo = t_start as isize - l_c as isize;
    let hi = t_end as isize + l_c as isize;
    let indices: Vec<usize> = (lo..=hi)
        .map(|t| t.clamp(0, len as isize - 1) as usize)
        .collect();
    let sliced = tape.gather_cols(stream, &indices)?;
    Ok(tape.resample_linear(sliced, l_fix)?)
}

/// Plain-tensor interval feature for both streams.
pub fn interval_feature(
    features: &FeatureSequence,
    t_start: usize,
    t_end: usize,
    l_c: usize,
    l_fix: usize,
) -> Result<IntervalFeature> {
    let mut tape = Tape::new();
    let a = tape.input(features.appearance.clone());
    let m = tape.input(features.motion.clone());
    let fa = interval_feature_var(&mut tape, a, t_start, t_end, l_c, l_fix)?;
    let fm = interval_feature_var(&mut tape, m, t_start, t_end, l_c, l_fix)?;
    Ok(IntervalFeature {
        appearance: tape.value(fa).clone(),
        motion: tape.value(fm).clone(),
    })
}

#[derive(Debug, Clone)]
pub struct TienConfig {
    pub appearance_dim: usize,
    pub motion_dim: usize,
    /// Context snippets added on each side of an interval.
    pub l_c: usize,
    /// Rescaled temporal length of interval features.
    pub l_fix: usize,
    pub block: BlockKind,
    pub pn_levels: Vec<(usize, usize)>,
    pub trunk_channels: usize,
    pub fuse_channels: usize,
    pub attn_reduction: usize,
    pub attn_kernel: usize,
}

#[derive(Debug, Clone)]
pub struct TienParams {
    pub config: TienConfig,
    pub attn_appearance: AttentionParams,
    pub attn_motion: AttentionParams,
    pub block: BlockParams,
    /// Head mapping the pooled trunk feature to (confidence, start offset,
    /// end offset) logits.
    pub fc_w: Tensor,
    pub fc_b: Tensor,
}

impl TienParams {
    pub fn init(config: TienConfig, seed: u64) -> Self {
        let mut rng = seed::rng(seed, tags::TIEN_INIT);
        Self::init_with_rng(config, &mut rng)
    }

    pub fn init_with_rng(config: TienConfig, rng: &mut ChaCha8Rng) -> Self {
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
        TienParams {
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
            fc_w: super::nets::init_fc(rng, 3, config.fuse_channels),
            fc_b: Tensor::zeros(&[3]),
            config,
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.attn_appearance.named_tensors("tien.attn_a");
        out.extend(self.attn_motion.named_tensors("tien.attn_m"));
        out.extend(self.block.named_tensors("tien.block"));
        out.push(("tien.fc_w".into(), &self.fc_w));
        out.push(("tien.fc_b".into(), &self.fc_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.attn_appearance.tensors_mut();
        out.extend(self.attn_motion.tensors_mut());
        out.extend(self.block.tensors_mut());
        out.push(&mut self.fc_w);
        out.push(&mut self.fc_b);
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> TienVars {
        let attn_a = self.attn_appearance.bind(tape, trainable);
        let attn_m = self.attn_motion.bind(tape, trainable);
        let block = self.block.bind(tape, trainable);
        let fc_w = if trainable {
            tape.param(self.fc_w.clone())
        } else {
            tape.input(self.fc_w.clone())
        };
        let fc_b = if trainable {
            tape.param(self.fc_b.clone())
        } else {
            tape.input(self.fc_b.clone())
        };
        TienVars {
            attn_a,
            attn_m,
            block,
            fc_w,
            fc_b,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let named = self.named_tensors();
        srg_tensor::checkpoint::save_checkpoint(path, &named)?;
        Ok(())
    }

    pub fn load(path: &Path, config: TienConfig, seed: u64) -> Result<Self> {
        let mut params = Self::init(config, seed);
        let loaded = srg_tensor::checkpoint::load_checkpoint(path)?;
        let names: Vec<String> = params
            .named_tensors()
            .iter()
            .map(|(n, _)| n.clone())
            .collect();
        let mut targets: Vec<(String, &mut Tensor)> =
            names.into_iter().zip(params.tensors_mut()).collect();
        fill_named(&mut targets, loaded, "tien")?;
        Ok(params)
    }
}

#[derive(Debug, Clone)]
pub struct TienVars {
    pub attn_a: AttentionVars,
    pub attn_m: AttentionVars,
    pub block: BlockVars,
    pub fc_w: Var,
    pub fc_b: Var,
}

impl TienVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.attn_a.all();
        out.extend(self.attn_m.all());
        out.extend(self.block.all());
        out.push(self.fc_w);
        out.push(self.fc_b);
        out
    }
}

/// Forward one interval feature to `[confidence, o_start+0.5, o_end+0.5]`
/// (sigmoid outputs; offsets are recovered by subtracting 0.5).
pub fn tien_forward_raw(tape: &mut Tape, vars: &TienVars, appearance: Var, motion: Var) -> Result<Var> {
    let a = attention_block(tape, appearance, &vars.attn_a)?;
    let m = attention_block(tape, motion, &vars.attn_m)?;
    let x = tape.concat_rows(&[a, m])?;
    let trunk = block_forward(tape, x, &vars.block, false)?;
    let pooled = tape.reduce_rows(trunk, Reduce::Mean)?;
    let logits = tape.linear(vars.fc_w, pooled, Some(vars.fc_b))?;
    Ok(tape.sigmoid(logits))
}

/// Confidence and offsets for one interval feature.
pub fn tien_forward(
    params: &TienParams,
    feature: &IntervalFeature,
) -> Result<(f32, f32, f32)> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, false);
    let a = tape.input(feature.appearance.clone());
    let m = tape.input(feature.motion.clone());
    let y = tien_forward_raw(&mut tape, &vars, a, m)?;
    let out = tape.value(y);
    Ok((out.data()[0], out.data()[1] - 0.5, out.data()[2] - 0.5))
}

/// Batch inference; identical to mapping [`tien_forward`] over the batch.
pub fn tien_forward_batch(
    params: &TienParams,
    features: &[IntervalFeature],
) -> Result<Vec<(f32, f32, f32)>> {
    features.iter().map(|f| tien_forward(params, f)).collect()
}

/// A mined training sample: interval plus its ground-truth alignment.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub interval: TemporalInterval,
    /// Best tIoU against any instance.
    pub overlap: f32,
    /// Positive flag: overlap ≥ 0.5.
    pub positive: bool,
    /// Fraction-of-length offsets toward the best-matching instance,
    /// clamped to [−0.5, 0.5].
    pub offset_start: f32,
    pub offset_end: f32,
}

pub const POSITIVE_TIOU: f32 = 0.5;
pub const NEGATIVE_TIOU: f32 = 0.1;

/// Score intervals against ground truth; keep positives (tIoU ≥ 0.5) and
/// negatives (tIoU ≤ 0.1), discarding the band between.
pub fn make_training_samples(
    intervals: &[TemporalInterval],
    instances: &[GroundTruthInstance],
) -> Vec<TrainingSample> {
    let mut out = Vec::new();
    for &interval in intervals {
        let span = Span {
            start: interval.t_start as f64,
            end: interval.t_end as f64,
        };
        let mut best: Option<(f64, &GroundTruthInstance)> = None;
        for inst in instances {
            let overlap = tiou(span, Span::from_instance(inst));
            if best.map(|(b, _)| overlap > b).unwrap_or(true) {
                best = Some((overlap, inst));
            }
        }
        let (overlap, best_inst) = match best {
            Some((o, inst)) => (o as f32, Some(inst)),
            None => (0.0, None),
        };
        if overlap > NEGATIVE_TIOU && overlap < POSITIVE_TIOU {
            continue;
        }
        let positive = overlap >= POSITIVE_TIOU;
        let (offset_start, offset_end) = match (positive, best_inst) {
            (true, Some(inst)) => {
                let len = interval.span_len() as f32;
                (
                    ((inst.start as f32 - interval.t_start as f32) / len).clamp(-0.5, 0.5),
                    ((inst.end as f32 - interval.t_end as f32) / len).clamp(-0.5, 0.5),
                )
            }
            _ => (0.0, 0.0),
        };
        out.push(TrainingSample {
            interval,
            overlap,
            positive,
            offset_start,
            offset_end,
        });
    }
    out
}

/// Scalar L1 loss over a batch: confidence term plus `alpha`-weighted offset
/// terms gated to positive samples.
pub fn tien_loss(
    tape: &mut Tape,
    predictions: Var,
    samples: &[&TrainingSample],
    alpha: f32,
) -> Result<Var> {
    if samples.is_empty() {
        return Err(CoreError::Argument("empty batch".into()));
    }
    let n = samples.len();
    let (rows, cols) = tape.value(predictions).dims2("tien_loss")?;
    if rows != n || cols != 3 {
        return Err(CoreError::Argument(format!(
            "predictions shape [{rows},{cols}] does not match batch of {n}"
        )));
    }
    let conf = tape.select_col(predictions, 0)?;
    let raw_s = tape.select_col(predictions, 1)?;
    let raw_e = tape.select_col(predictions, 2)?;
    let off_s = tape.add_scalar(raw_s, -0.5);
    let off_e = tape.add_scalar(raw_e, -0.5);
    let target_c = tape.input(Tensor::from_fn(&[n], |i| samples[i].overlap));
    let target_s = tape.input(Tensor::from_fn(&[n], |i| samples[i].offset_start));
    let target_e = tape.input(Tensor::from_fn(&[n], |i| samples[i].offset_end));
    let gate = tape.input(Tensor::from_fn(&[n], |i| samples[i].positive as u8 as f32));
    let ones = tape.input(Tensor::filled(&[n], 1.0));
    let l_c = tape.l1_gated_mean(conf, target_c, ones)?;
    let l_s = tape.l1_gated_mean(off_s, target_s, gate)?;
    let l_e = tape.l1_gated_mean(off_e, target_e, gate)?;
    let reg = tape.add(l_s, l_e)?;
    let reg = tape.scale(reg, alpha);
    Ok(tape.add(l_c, reg)?)
}

/// Apply predicted offsets: boundaries move by `offset · span_len`, clipped
/// to the sequence; a crossed pair falls back to the original boundaries.
pub fn refine(
    t_start: usize,
    t_end: usize,
    offset_start: f32,
    offset_end: f32,
    snippet_count: usize,
) -> (f64, f64) {
    let len = (t_end - t_start + 1) as f64;
    let max = snippet_count as f64 - 1.0;
    let s = (t_start as f64 + offset_start as f64 * len).clamp(0.0, max);
    let e = (t_end as f64 + offset_end as f64 * len).clamp(0.0, max);
    if s > e {
        (t_start as f64, t_end as f64)
    } else {
        (s, e)
    }
}

/// A scored, refined proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub t_start: usize,
    pub t_end: usize,
    pub offset_start: f32,
    pub offset_end: f32,
    pub confidence: f64,
    pub refined_start: f64,
    pub refined_end: f64,
}

impl Proposal {
    pub fn refined_span(&self) -> Span {
        Span {
            start: self.refined_start,
            end: self.refined_end,
        }
    }
}

/// Score and refine every interval of one video.
pub fn score_intervals(
    params: &TienParams,
    features: &FeatureSequence,
    intervals: &[TemporalInterval],
) -> Result<Vec<Proposal>> {
    let snippet_count = features.snippet_count();
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, false);
    let a = tape.input(features.appearance.clone());
    let m = tape.input(features.motion.clone());
    let mut out = Vec::with_capacity(intervals.len());
    for interval in intervals {
        let fa = interval_feature_var(
            &mut tape,
            a,
            interval.t_start,
            interval.t_end,
            params.config.l_c,
            params.config.l_fix,
        )?;
        let fm = interval_feature_var(
            &mut tape,
            m,
            interval.t_start,
            interval.t_end,
            params.config.l_c,
            params.config.l_fix,
        )?;
        let y = tien_forward_raw(&mut tape, &vars, fa, fm)?;
        let v = tape.value(y);
        let confidence = v.data()[0] as f64;
        let offset_start = v.data()[1] - 0.5;
        let offset_end = v.data()[2] - 0.5;
        let (refined_start, refined_end) = refine(
            interval.t_start,
            interval.t_end,
            offset_start,
            offset_end,
            snippet_count,
        );
        out.push(Proposal {
            t_start: interval.t_start,
            t_end: interval.t_end,
            offset_start,
            offset_end,
            confidence,
            refined_start,
            refined_end,
        });
    }
    Ok(out)
}

/// One pooled sample with its source video.
#[derive(Debug, Clone)]
pub struct PooledSample {
    pub video_idx: usize,
    pub sample: TrainingSample,
}

/// Generate intervals with a trained generation network and mine training
/// samples across the whole dataset.
pub fn build_training_pool(
    dataset: &Dataset,
    tign: &TignParams,
    taus: &[f32],
) -> Result<Vec<PooledSample>> {
    let mut pool = Vec::new();
    for (video_idx, video) in dataset.videos.iter().enumerate() {
        let maps = crate::tign::infer_score_maps(tign, &video.features)?;
        let intervals = gen_all(&maps, taus)?;
        for sample in make_training_samples(&intervals, &video.instances) {
            pool.push(PooledSample { video_idx, sample });
        }
    }
    Ok(pool)
}

/// Mine a pool from a pre-generated interval dump instead of running the
/// generation network.
pub fn pool_from_intervals(
    dataset: &Dataset,
    per_video: &[(String, Vec<TemporalInterval>)],
) -> Result<Vec<PooledSample>> {
    let index: BTreeMap<&str, usize> = dataset
        .videos
        .iter()
        .enumerate()
        .map(|(i, v)| (v.meta.video_id.as_str(), i))
        .collect();
    let mut pool = Vec::new();
    for (video_id, intervals) in per_video {
        let &video_idx = index.get(video_id.as_str()).ok_or_else(|| {
            CoreError::Validation(format!("intervals reference unknown video {video_id}"))
        })?;
        let video = &dataset.videos[video_idx];
        for sample in make_training_samples(intervals, &video.instances) {
            pool.push(PooledSample { video_idx, sample });
        }
    }
    Ok(pool)
}

#[derive(Debug, Clone, Copy)]
pub struct TienTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub alpha: f32,
    pub schedule: LrSchedule,
    pub seed: u64,
}

/// Train with balanced positive/negative batches drawn with replacement.
pub fn train_tien(
    dataset: &Dataset,
    pool: &[PooledSample],
    params: &mut TienParams,
    train: &TienTrainConfig,
) -> Result<Vec<f64>> {
    let positives: Vec<&PooledSample> = pool.iter().filter(|p| p.sample.positive).collect();
    let negatives: Vec<&PooledSample> = pool.iter().filter(|p| !p.sample.positive).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(CoreError::Training {
            step: 0,
            detail: format!(
                "sample pool needs both classes: {} positives, {} negatives",
                positives.len(),
                negatives.len()
            ),
        });
    }
    if train.batch_size < 2 {
        return Err(CoreError::Argument("batch size must be >= 2".into()));
    }
    let sizes: Vec<usize> = params.tensors_mut().iter().map(|t| t.numel()).collect();
    let mut adam = Adam::new(&sizes);
    let mut rng = seed::rng(train.seed, tags::TIEN_TRAIN);
    let half = train.batch_size / 2;
    let mut history = Vec::with_capacity(train.steps);
    for step in 0..train.steps {
        let mut batch: Vec<&PooledSample> = Vec::with_capacity(2 * half);
        for _ in 0..half {
            batch.push(positives.choose(&mut rng).unwrap());
        }
        for _ in 0..half {
            batch.push(negatives.choose(&mut rng).unwrap());
        }
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape, true);
        // one features leaf per distinct video in the batch
        let mut streams: BTreeMap<usize, (Var, Var)> = BTreeMap::new();
        for pooled in &batch {
            streams.entry(pooled.video_idx).or_insert_with(|| {
                let video = &dataset.videos[pooled.video_idx];
                let a = tape.input(video.features.appearance.clone());
                let m = tape.input(video.features.motion.clone());
                (a, m)
            });
        }
        let mut rows = Vec::with_capacity(batch.len());
        for pooled in &batch {
            let (a, m) = streams[&pooled.video_idx];
            let interval = &pooled.sample.interval;
            let fa = interval_feature_var(
                &mut tape,
                a,
                interval.t_start,
                interval.t_end,
                params.config.l_c,
                params.config.l_fix,
            )?;
            let fm = interval_feature_var(
                &mut tape,
                m,
                interval.t_start,
                interval.t_end,
                params.config.l_c,
                params.config.l_fix,
            )?;
            rows.push(tien_forward_raw(&mut tape, &vars, fa, fm)?);
        }
        let stacked = tape.stack_rows(&rows)?;
        let samples: Vec<&TrainingSample> = batch.iter().map(|p| &p.sample).collect();
        let loss = tien_loss(&mut tape, stacked, &samples, train.alpha)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(CoreError::Training {
                step: step as u64,
                detail: format!("loss is not finite ({loss_value})"),
            });
        }
        let grads = tape.backward(loss)?;
        let grad_tensors: Vec<Tensor> = vars.all().iter().map(|&v| grads.of(v, &tape)).collect();
        let mut slots = params.tensors_mut();
        adam.step(&mut slots, &grad_tensors, train.schedule.lr_at(step as u64))?;
        history.push(loss_value as f64);
    }
    Ok(history)
}

/// Proposal file: tab-separated `video_id  refined_start  refined_end
/// confidence`, fixed decimal formatting.
pub fn save_proposals(path: &Path, per_video: &[(String, Vec<Proposal>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# video_id\trefined_start\trefined_end\tconfidence")?;
    for (video_id, proposals) in per_video {
        for p in proposals {
            writeln!(
                w,
                "{video_id}\t{:.4}\t{:.4}\t{:.6}",
                p.refined_start, p.refined_end, p.confidence
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_proposals(path: &Path) -> Result<Vec<(String, Vec<Proposal>)>> {
    let display = path.display().to_string();
    let mut out: Vec<(String, Vec<Proposal>)> = Vec::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split('\t').collect();
        if fields.len() != 4 {
            return Err(CoreError::ParseLine {
                path: display,
                line: line_no,
                detail: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let err = |detail: String| CoreError::ParseLine {
            path: display.clone(),
            line: line_no,
            detail,
        };
        let refined_start: f64 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad start {:?}", fields[1])))?;
        let refined_end: f64 = fields[2]
            .parse()
            .map_err(|_| err(format!("bad end {:?}", fields[2])))?;
        let confidence: f64 = fields[3]
            .parse()
            .map_err(|_| err(format!("bad confidence {:?}", fields[3])))?;
        let proposal = Proposal {
            t_start: refined_start.round().max(0.0) as usize,
            t_end: refined_end.round().max(0.0) as usize,
            offset_start: 0.0,
            offset_end: 0.0,
            confidence,
            refined_start,
            refined_end,
        };
        match out.last_mut() {
            Some((id, list)) if *id == fields[0] => list.push(proposal),
            _ => out.push((fields[0].to_string(), vec![proposal])),
        }
    }
    Ok(out)
}
