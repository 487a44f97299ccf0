//! Run configuration: a flat `key = value` file with `#` comments. Unknown
//! keys are rejected; parse errors carry line numbers. A named profile
//! supplies every default and an optional config file overrides it key by
//! key.

use anyhow::{anyhow, bail, Context, Result};
use std::path::Path;

use srg_core::data::SynthConfig;
use srg_core::eval::{threshold_range, AnMode, MetricConfig};
use srg_core::intervals::tau_schedule;
use srg_core::nets::BlockKind;
use srg_core::post::{NmsConfig, NmsMode};
use srg_core::tien::{TienConfig, TienTrainConfig};
use srg_core::tign::{TignConfig, TignTrainConfig};
use srg_tensor::LrSchedule;

pub const TINY_PROFILE: &str = include_str!("../../../profiles/tiny.cfg");
pub const PAPERISH_PROFILE: &str = include_str!("../../../profiles/paperish.cfg");

/// Which interval routes feed the evaluation network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalSourceSel {
    Rs,
    Wrs,
    Both,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,

    // dataset
    pub num_videos: usize,
    pub num_val_videos: usize,
    pub ls_min: usize,
    pub ls_max: usize,
    pub instances_min: usize,
    pub instances_max: usize,
    pub dur_min: usize,
    pub dur_max: usize,
    pub classes: usize,
    pub d_a: usize,
    pub d_m: usize,
    pub signature_noise: f32,
    pub background_noise: f32,

    // model
    pub n_nbr: usize,
    pub trunk_channels: usize,
    pub fuse_channels: usize,
    pub attn_reduction: usize,
    pub attn_kernel: usize,
    pub head_kernel: usize,
    pub tign_pn_levels: Vec<(usize, usize)>,
    pub tien_pn_levels: Vec<(usize, usize)>,
    pub l_c: usize,
    pub l_fix: usize,
    pub tign_block: BlockKind,
    pub tien_block: BlockKind,

    // training
    pub tign_epochs: usize,
    pub tign_lr: f64,
    pub tign_decay_every: u64,
    pub tign_decay_base: f64,
    pub tien_steps: usize,
    pub tien_batch: usize,
    pub tien_lr: f64,
    pub tien_decay_every: u64,
    pub tien_decay_base: f64,
    pub tien_alpha: f32,

    // intervals / post
    pub tau_start: f64,
    pub tau_step: f64,
    pub tau_stop: f64,
    pub interval_source: IntervalSourceSel,
    pub nms_mode_fixed: bool,
    pub nms_threshold: f64,
    pub nms_adaptive_floor: f64,
    pub boost: bool,
    pub max_proposals: usize,

    // evaluation
    pub tiou_start: f64,
    pub tiou_step: f64,
    pub tiou_stop: f64,
    pub an_values: Vec<usize>,
    pub auc_an_lo: usize,
    pub auc_an_hi: usize,
    pub an_mode: AnMode,

    // ablation
    pub ablate_blocks: Vec<(BlockKind, BlockKind)>,
    pub ablate_boost: Vec<bool>,
    pub ablate_train_videos: usize,
    pub ablate_val_videos: usize,
    pub ablate_tign_epochs: usize,
    pub ablate_tien_steps: usize,
}

fn parse_block(value: &str) -> Result<BlockKind> {
    match value {
        "pn" => Ok(BlockKind::Pn),
        "cm" => Ok(BlockKind::Cm),
        other => bail!("expected pn or cm, got {other:?}"),
    }
}

fn parse_levels(value: &str) -> Result<Vec<(usize, usize)>> {
    value
        .split(',')
        .map(|pair| {
            let (k, s) = pair
                .split_once(':')
                .ok_or_else(|| anyhow!("level {pair:?} is not kernel:stride"))?;
            Ok((k.trim().parse()?, s.trim().parse()?))
        })
        .collect()
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => bail!("expected on/off, got {other:?}"),
    }
}

impl RunConfig {
    /// Start from a named profile, then apply overrides from `config_path`
    /// and finally the explicit seed, when given.
    pub fn load(
        profile: &str,
        config_path: Option<&Path>,
        seed_override: Option<u64>,
    ) -> Result<RunConfig> {
        let base = match profile {
            "tiny" => TINY_PROFILE,
            "paperish" => PAPERISH_PROFILE,
            other => bail!("unknown profile {other:?} (available: tiny, paperish)"),
        };
        let mut keys = KeyTable::default();
        keys.apply_text(base, &format!("<profile {profile}>"))?;
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            keys.apply_text(&text, &path.display().to_string())?;
        }
        let mut config = keys.build()?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        self.synth_config(0).validate()?;
        if self.head_kernel % 2 == 0 || self.attn_kernel % 2 == 0 {
            bail!("head_kernel and attn_kernel must be odd");
        }
        if self.l_fix < 2 {
            bail!("l_fix must be >= 2");
        }
        if self.tien_batch < 2 {
            bail!("tien_batch must be >= 2");
        }
        self.metric_config()?;
        self.taus()?;
        self.nms_config()?;
        Ok(())
    }

    pub fn synth_config(&self, split_salt: u64) -> SynthConfig {
        SynthConfig {
            num_videos: if split_salt == 0 {
                self.num_videos
            } else {
                self.num_val_videos
            },
            snippet_count_range: (self.ls_min, self.ls_max),
            instances_per_video: (self.instances_min, self.instances_max),
            duration_range: (self.dur_min, self.dur_max),
            num_classes: self.classes,
            appearance_dim: self.d_a,
            motion_dim: self.d_m,
            signature_noise: self.signature_noise,
            background_noise: self.background_noise,
            seed: self.seed,
            split_salt,
        }
    }

    pub fn tign_config(&self, block: BlockKind) -> TignConfig {
        TignConfig {
            appearance_dim: self.d_a,
            motion_dim: self.d_m,
            n_nbr: self.n_nbr,
            block,
            pn_levels: self.tign_pn_levels.clone(),
            trunk_channels: self.trunk_channels,
            fuse_channels: self.fuse_channels,
            attn_reduction: self.attn_reduction,
            attn_kernel: self.attn_kernel,
            head_kernel: self.head_kernel,
        }
    }

    pub fn tien_config(&self, block: BlockKind) -> TienConfig {
        TienConfig {
            appearance_dim: self.d_a,
            motion_dim: self.d_m,
            l_c: self.l_c,
            l_fix: self.l_fix,
            block,
            pn_levels: self.tien_pn_levels.clone(),
            trunk_channels: self.trunk_channels,
            fuse_channels: self.fuse_channels,
            attn_reduction: self.attn_reduction,
            attn_kernel: self.attn_kernel,
        }
    }

    pub fn tign_train_config(&self, epochs: usize) -> TignTrainConfig {
        TignTrainConfig {
            epochs,
            schedule: LrSchedule::new(self.tign_lr, self.tign_decay_base, self.tign_decay_every),
            seed: self.seed,
        }
    }

    pub fn tien_train_config(&self, steps: usize) -> TienTrainConfig {
        TienTrainConfig {
            steps,
            batch_size: self.tien_batch,
            alpha: self.tien_alpha,
            schedule: LrSchedule::new(self.tien_lr, self.tien_decay_base, self.tien_decay_every),
            seed: self.seed,
        }
    }

    pub fn taus(&self) -> Result<Vec<f32>> {
        Ok(tau_schedule(self.tau_start, self.tau_step, self.tau_stop)?)
    }

    pub fn nms_config(&self) -> Result<NmsConfig> {
        if self.nms_mode_fixed {
            Ok(NmsConfig::fixed(self.nms_threshold)?)
        } else {
            Ok(NmsConfig {
                mode: NmsMode::Adaptive {
                    floor: self.nms_adaptive_floor,
                },
            })
        }
    }

    pub fn metric_config(&self) -> Result<MetricConfig> {
        let config = MetricConfig {
            tiou_thresholds: threshold_range(self.tiou_start, self.tiou_step, self.tiou_stop)?,
            an_values: self.an_values.clone(),
            auc_an_range: (self.auc_an_lo, self.auc_an_hi),
            an_mode: self.an_mode,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Raw key/value storage with provenance, so later sources override earlier
/// ones and typos are caught against the full key list.
#[derive(Default)]
struct KeyTable {
    entries: std::collections::BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "num_videos",
    "num_val_videos",
    "ls_min",
    "ls_max",
    "instances_min",
    "instances_max",
    "dur_min",
    "dur_max",
    "classes",
    "d_a",
    "d_m",
    "signature_noise",
    "background_noise",
    "n_nbr",
    "trunk_channels",
    "fuse_channels",
    "attn_reduction",
    "attn_kernel",
    "head_kernel",
    "tign_pn_levels",
    "tien_pn_levels",
    "l_c",
    "l_fix",
    "tign_block",
    "tien_block",
    "tign_epochs",
    "tign_lr",
    "tign_decay_every",
    "tign_decay_base",
    "tien_steps",
    "tien_batch",
    "tien_lr",
    "tien_decay_every",
    "tien_decay_base",
    "tien_alpha",
    "tau_start",
    "tau_step",
    "tau_stop",
    "interval_source",
    "nms_mode",
    "nms_threshold",
    "nms_adaptive_floor",
    "boost",
    "max_proposals",
    "tiou_start",
    "tiou_step",
    "tiou_stop",
    "an_values",
    "auc_an_lo",
    "auc_an_hi",
    "an_mode",
    "ablate_blocks",
    "ablate_boost",
    "ablate_train_videos",
    "ablate_val_videos",
    "ablate_tign_epochs",
    "ablate_tien_steps",
];

impl KeyTable {
    fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{line_no}: expected key = value"))?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!("{origin}:{line_no}: unknown key {key:?}");
            }
            if value.is_empty() {
                bail!("{origin}:{line_no}: empty value for {key:?}");
            }
            self.entries.insert(key.to_string(), value.to_string());
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| anyhow!("missing required key {key:?}"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|e| anyhow!("key {key:?}: cannot parse {raw:?}: {e}"))
    }

    fn build(&self) -> Result<RunConfig> {
        let an_values: Vec<usize> = self
            .get("an_values")?
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|e| anyhow!("an_values entry {v:?}: {e}"))
            })
            .collect::<Result<_>>()?;
        let interval_source = match self.get("interval_source")? {
            "rs" => IntervalSourceSel::Rs,
            "wrs" => IntervalSourceSel::Wrs,
            "both" => IntervalSourceSel::Both,
            other => bail!("interval_source: expected rs|wrs|both, got {other:?}"),
        };
        let nms_mode_fixed = match self.get("nms_mode")? {
            "fixed" => true,
            "adaptive" => false,
            other => bail!("nms_mode: expected fixed|adaptive, got {other:?}"),
        };
        let an_mode = match self.get("an_mode")? {
            "per_video" => AnMode::PerVideo,
            "corpus" => AnMode::Corpus,
            other => bail!("an_mode: expected per_video|corpus, got {other:?}"),
        };
        let ablate_blocks = self
            .get("ablate_blocks")?
            .split(',')
            .map(|pair| {
                let (a, b) = pair
                    .trim()
                    .split_once('+')
                    .ok_or_else(|| anyhow!("ablate_blocks entry {pair:?} is not tign+tien"))?;
                Ok((parse_block(a.trim())?, parse_block(b.trim())?))
            })
            .collect::<Result<_>>()?;
        let ablate_boost = self
            .get("ablate_boost")?
            .split(',')
            .map(|v| parse_bool(v.trim()))
            .collect::<Result<_>>()?;
        Ok(RunConfig {
            seed: self.parse("seed")?,
            num_videos: self.parse("num_videos")?,
            num_val_videos: self.parse("num_val_videos")?,
            ls_min: self.parse("ls_min")?,
            ls_max: self.parse("ls_max")?,
            instances_min: self.parse("instances_min")?,
            instances_max: self.parse("instances_max")?,
            dur_min: self.parse("dur_min")?,
            dur_max: self.parse("dur_max")?,
            classes: self.parse("classes")?,
            d_a: self.parse("d_a")?,
            d_m: self.parse("d_m")?,
            signature_noise: self.parse("signature_noise")?,
            background_noise: self.parse("background_noise")?,
            n_nbr: self.parse("n_nbr")?,
            trunk_channels: self.parse("trunk_channels")?,
            fuse_channels: self.parse("fuse_channels")?,
            attn_reduction: self.parse("attn_reduction")?,
            attn_kernel: self.parse("attn_kernel")?,
            head_kernel: self.parse("head_kernel")?,
            tign_pn_levels: parse_levels(self.get("tign_pn_levels")?)?,
            tien_pn_levels: parse_levels(self.get("tien_pn_levels")?)?,
            l_c: self.parse("l_c")?,
            l_fix: self.parse("l_fix")?,
            tign_block: parse_block(self.get("tign_block")?)?,
            tien_block: parse_block(self.get("tien_block")?)?,
            tign_epochs: self.parse("tign_epochs")?,
            tign_lr: self.parse("tign_lr")?,
            tign_decay_every: self.parse("tign_decay_every")?,
            tign_decay_base: self.parse("tign_decay_base")?,
            tien_steps: self.parse("tien_steps")?,
            tien_batch: self.parse("tien_batch")?,
            tien_lr: self.parse("tien_lr")?,
            tien_decay_every: self.parse("tien_decay_every")?,
            tien_decay_base: self.parse("tien_decay_base")?,
            tien_alpha: self.parse("tien_alpha")?,
            tau_start: self.parse("tau_start")?,
            tau_step: self.parse("tau_step")?,
            tau_stop: self.parse("tau_stop")?,
            interval_source,
            nms_mode_fixed,
            nms_threshold: self.parse("nms_threshold")?,
            nms_adaptive_floor: self.parse("nms_adaptive_floor")?,
            boost: parse_bool(self.get("boost")?)?,
            max_proposals: self.parse("max_proposals")?,
            tiou_start: self.parse("tiou_start")?,
            tiou_step: self.parse("tiou_step")?,
            tiou_stop: self.parse("tiou_stop")?,
            an_values,
            auc_an_lo: self.parse("auc_an_lo")?,
            auc_an_hi: self.parse("auc_an_hi")?,
            an_mode,
            ablate_blocks,
            ablate_boost,
            ablate_train_videos: self.parse("ablate_train_videos")?,
            ablate_val_videos: self.parse("ablate_val_videos")?,
            ablate_tign_epochs: self.parse("ablate_tign_epochs")?,
            ablate_tien_steps: self.parse("ablate_tien_steps")?,
        })
    }
}
