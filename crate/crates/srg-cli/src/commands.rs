//! Command implementations. Every command validates its input paths up
//! front, writes outputs atomically (temp file + rename, so failures leave
//! nothing at the target path), and confines wall-clock timing to a sidecar
//! `<out>.log`.

use anyhow::{bail, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::config::RunConfig;
use crate::pipeline::{propose_dataset, ProposeSettings};
use srg_core::data::{load_dataset, save_dataset, synth_generate, Dataset};
use srg_core::eval::{write_metrics_csv, EvalVideo};
use srg_core::intervals::{load_intervals, save_intervals};
use srg_core::nets::BlockKind;
use srg_core::tien::{
    build_training_pool, load_proposals, pool_from_intervals, save_proposals, train_tien,
    TienParams,
};
use srg_core::tign::{save_score_maps, train_tign, TignParams};

pub fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "{what} not found at {}; run the producing command first",
            path.display()
        );
    }
    Ok(())
}

/// Write through a temp file in the same directory, then rename into place.
fn atomic_write(path: &Path, build: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(
        ".{}.partial",
        path.file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "out".into())
    ));
    if tmp.exists() {
        fs::remove_file(&tmp).ok();
    }
    build(&tmp).inspect_err(|_| {
        fs::remove_file(&tmp).ok();
    })?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Same idea for directories.
fn atomic_dir(path: &Path, build: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(
        ".{}.partial",
        path.file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "out".into())
    ));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    build(&tmp).inspect_err(|_| {
        fs::remove_dir_all(&tmp).ok();
    })?;
    if path.exists() {
        fs::remove_dir_all(path)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_sidecar_log(out: &Path, lines: &str) {
    let log_path = out.with_extension(format!(
        "{}log",
        out.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    let _ = fs::write(log_path, lines);
}

fn timestamp() -> String {
    use std::time::{SystemTime, UNIX_EPOCH};
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    format!("unix {}s", now.as_secs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn dir_name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => bail!("unknown split {other:?} (expected train|val)"),
        }
    }
}

pub fn load_split(data_dir: &Path, split: Split) -> Result<Dataset> {
    let dir = data_dir.join(split.dir_name());
    require_exists(&dir, "dataset split")?;
    Ok(load_dataset(&dir)?)
}

/// Synthesize the train and validation splits into `<out>/train` and
/// `<out>/val`.
pub fn cmd_synth(config: &RunConfig, out: &Path) -> Result<()> {
    let start = Instant::now();
    let began = timestamp();
    let train = synth_generate(&config.synth_config(0))?;
    let val = synth_generate(&config.synth_config(1))?;
    atomic_dir(out, |tmp| {
        save_dataset(&tmp.join("train"), &train)?;
        save_dataset(&tmp.join("val"), &val)?;
        Ok(())
    })?;
    let mut log = String::new();
    let _ = writeln!(log, "command: synth ({})", began);
    let _ = writeln!(
        log,
        "train: {} videos, {} instances",
        train.len(),
        train.total_instances()
    );
    let _ = writeln!(
        log,
        "val: {} videos, {} instances",
        val.len(),
        val.total_instances()
    );
    let _ = writeln!(log, "elapsed: {:.2}s", start.elapsed().as_secs_f64());
    write_sidecar_log(out, &log);
    Ok(())
}

/// Train the generation network on the train split and write its checkpoint.
pub fn cmd_train_tign(config: &RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    let start = Instant::now();
    let began = timestamp();
    let dataset = load_split(data_dir, Split::Train)?;
    let mut params = TignParams::init(config.tign_config(config.tign_block), config.seed);
    let history = train_tign(
        &dataset,
        &mut params,
        &config.tign_train_config(config.tign_epochs),
    )?;
    atomic_write(out, |tmp| Ok(params.save(tmp)?))?;
    let losses_path = out.with_extension("losses.tsv");
    atomic_write(&losses_path, |tmp| {
        let mut body = String::from("# epoch\tmean_loss\n");
        for (epoch, loss) in history.iter().enumerate() {
            let _ = writeln!(body, "{epoch}\t{loss:.6}");
        }
        fs::write(tmp, body)?;
        Ok(())
    })?;
    let mut log = String::new();
    let _ = writeln!(log, "command: train-tign ({})", began);
    let _ = writeln!(log, "steps: {}", dataset.len() * config.tign_epochs);
    let _ = writeln!(
        log,
        "loss: first epoch {:.4}, last epoch {:.4}",
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN)
    );
    let _ = writeln!(log, "elapsed: {:.2}s", start.elapsed().as_secs_f64());
    write_sidecar_log(out, &log);
    Ok(())
}

/// Train the evaluation network against intervals generated by a trained
/// generation network (or a pre-dumped interval file).
pub fn cmd_train_tien(
    config: &RunConfig,
    data_dir: &Path,
    tign_path: &Path,
    intervals_path: Option<&Path>,
    dump_intervals: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    let began = timestamp();
    require_exists(tign_path, "generation-network checkpoint")?;
    let dataset = load_split(data_dir, Split::Train)?;
    let tign = TignParams::load(
        tign_path,
        config.tign_config(config.tign_block),
        config.seed,
    )?;
    let pool = match intervals_path {
        Some(path) => {
            require_exists(path, "interval dump")?;
            let per_video = load_intervals(path)?;
            pool_from_intervals(&dataset, &per_video)?
        }
        None => {
            let taus = config.taus()?;
            if let Some(dump) = dump_intervals {
                let mut per_video = Vec::new();
                for video in &dataset.videos {
                    let maps = srg_core::tign::infer_score_maps(&tign, &video.features)?;
                    let intervals = srg_core::intervals::gen_all(&maps, &taus)?;
                    per_video.push((video.meta.video_id.clone(), intervals));
                }
                atomic_write(dump, |tmp| Ok(save_intervals(tmp, &per_video)?))?;
                pool_from_intervals(&dataset, &per_video)?
            } else {
                build_training_pool(&dataset, &tign, &taus)?
            }
        }
    };
    let mut params = TienParams::init(config.tien_config(config.tien_block), config.seed);
    let history = train_tien(
        &dataset,
        &pool,
        &mut params,
        &config.tien_train_config(config.tien_steps),
    )?;
    atomic_write(out, |tmp| Ok(params.save(tmp)?))?;
    let losses_path = out.with_extension("losses.tsv");
    atomic_write(&losses_path, |tmp| {
        let mut body = String::from("# step\tloss\n");
        for (step, loss) in history.iter().enumerate() {
            let _ = writeln!(body, "{step}\t{loss:.6}");
        }
        fs::write(tmp, body)?;
        Ok(())
    })?;
    let positives = pool.iter().filter(|p| p.sample.positive).count();
    let mut log = String::new();
    let _ = writeln!(log, "command: train-tien ({})", began);
    let _ = writeln!(
        log,
        "pool: {} samples ({} positive, {} negative)",
        pool.len(),
        positives,
        pool.len() - positives
    );
    let _ = writeln!(log, "elapsed: {:.2}s", start.elapsed().as_secs_f64());
    write_sidecar_log(out, &log);
    Ok(())
}

/// Generate, score, refine, and suppress proposals for one split.
#[allow(clippy::too_many_arguments)]
pub fn cmd_propose(
    config: &RunConfig,
    data_dir: &Path,
    split: Split,
    tign_path: &Path,
    tien_path: &Path,
    dump_maps: Option<&Path>,
    dump_intervals: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    let began = timestamp();
    require_exists(tign_path, "generation-network checkpoint")?;
    require_exists(tien_path, "evaluation-network checkpoint")?;
    let dataset = load_split(data_dir, split)?;
    let tign = TignParams::load(
        tign_path,
        config.tign_config(config.tign_block),
        config.seed,
    )?;
    let tien = TienParams::load(
        tien_path,
        config.tien_config(config.tien_block),
        config.seed,
    )?;
    let settings = ProposeSettings::from_config(config)?;
    let results = propose_dataset(&dataset, &tign, &tien, &settings)?;
    if let Some(maps_dir) = dump_maps {
        atomic_dir(maps_dir, |tmp| {
            for r in &results {
                save_score_maps(&tmp.join(format!("{}.srgm", r.video_id)), &r.maps)?;
            }
            Ok(())
        })?;
    }
    if let Some(dump) = dump_intervals {
        let per_video: Vec<_> = results
            .iter()
            .map(|r| (r.video_id.clone(), r.intervals.clone()))
            .collect();
        atomic_write(dump, |tmp| Ok(save_intervals(tmp, &per_video)?))?;
    }
    let per_video: Vec<_> = results
        .iter()
        .map(|r| (r.video_id.clone(), r.proposals.clone()))
        .collect();
    atomic_write(out, |tmp| Ok(save_proposals(tmp, &per_video)?))?;
    let total: usize = per_video.iter().map(|(_, p)| p.len()).sum();
    let mut log = String::new();
    let _ = writeln!(log, "command: propose ({})", began);
    let _ = writeln!(
        log,
        "{} proposals across {} videos ({} split)",
        total,
        dataset.len(),
        split.dir_name()
    );
    let _ = writeln!(log, "elapsed: {:.2}s", start.elapsed().as_secs_f64());
    write_sidecar_log(out, &log);
    Ok(())
}

/// Score a proposal file against a split's ground truth.
pub fn cmd_eval(
    config: &RunConfig,
    data_dir: &Path,
    split: Split,
    proposals_path: &Path,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    let began = timestamp();
    require_exists(proposals_path, "proposal file")?;
    let dataset = load_split(data_dir, split)?;
    let proposals = load_proposals(proposals_path)?;
    let by_id: std::collections::BTreeMap<&str, &Vec<srg_core::tien::Proposal>> = proposals
        .iter()
        .map(|(id, list)| (id.as_str(), list))
        .collect();
    let known: std::collections::BTreeSet<&str> = dataset
        .videos
        .iter()
        .map(|v| v.meta.video_id.as_str())
        .collect();
    if let Some((orphan, _)) = proposals.iter().find(|(id, _)| !known.contains(id.as_str())) {
        bail!("proposal file references unknown video {orphan:?} for this split");
    }
    let empty = Vec::new();
    let videos: Vec<EvalVideo> = dataset
        .videos
        .iter()
        .map(|v| EvalVideo {
            proposals: by_id
                .get(v.meta.video_id.as_str())
                .map(|p| p.as_slice())
                .unwrap_or(&empty),
            ground_truth: &v.instances,
        })
        .collect();
    let metric_config = config.metric_config()?;
    atomic_write(out, |tmp| {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &videos, &metric_config)?;
        fs::write(tmp, buf)?;
        Ok(())
    })?;
    let mut log = String::new();
    let _ = writeln!(log, "command: eval ({})", began);
    let _ = writeln!(log, "elapsed: {:.2}s", start.elapsed().as_secs_f64());
    write_sidecar_log(out, &log);
    Ok(())
}

/// Train/propose/eval each configured block combination (and boost setting)
/// on reduced splits; emit one labeled CSV block per variant.
pub fn cmd_ablate(config: &RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    let start = Instant::now();
    let began = timestamp();
    let mut train_set = load_split(data_dir, Split::Train)?;
    let mut val_set = load_split(data_dir, Split::Val)?;
    train_set.videos.truncate(config.ablate_train_videos);
    val_set.videos.truncate(config.ablate_val_videos);
    if train_set.is_empty() || val_set.is_empty() {
        bail!("ablation subsets are empty; check ablate_train_videos/ablate_val_videos");
    }
    let metric_config = config.metric_config()?;
    let mut body = String::new();
    let mut log = String::new();
    let _ = writeln!(log, "command: ablate ({})", began);
    for &(tign_block, tien_block) in &config.ablate_blocks {
        for &boost in &config.ablate_boost {
            let variant_started = Instant::now();
            let variant = format!(
                "tign_{}+tien_{}{}",
                tign_block,
                tien_block,
                if boost { "+boost" } else { "" }
            );
            let results = run_ablation_variant(
                config,
                &train_set,
                &val_set,
                tign_block,
                tien_block,
                boost,
            )?;
            let videos: Vec<EvalVideo> = val_set
                .videos
                .iter()
                .zip(&results)
                .map(|(v, proposals)| EvalVideo {
                    proposals,
                    ground_truth: &v.instances,
                })
                .collect();
            let _ = writeln!(body, "# variant={variant}");
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &videos, &metric_config)?;
            body.push_str(&String::from_utf8_lossy(&buf));
            let _ = writeln!(
                log,
                "variant {variant}: {:.2}s",
                variant_started.elapsed().as_secs_f64()
            );
        }
    }
    atomic_write(out, |tmp| {
        fs::write(tmp, &body)?;
        Ok(())
    })?;
    let _ = writeln!(log, "elapsed: {:.2}s", start.elapsed().as_secs_f64());
    write_sidecar_log(out, &log);
    Ok(())
}

/// One ablation arm: fresh training of both networks with the requested
/// blocks, then proposals for the validation subset.
pub fn run_ablation_variant(
    config: &RunConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    tign_block: BlockKind,
    tien_block: BlockKind,
    boost: bool,
) -> Result<Vec<Vec<srg_core::tien::Proposal>>> {
    let mut tign = TignParams::init(config.tign_config(tign_block), config.seed);
    train_tign(
        train_set,
        &mut tign,
        &config.tign_train_config(config.ablate_tign_epochs),
    )?;
    let taus = config.taus()?;
    let pool = build_training_pool(train_set, &tign, &taus)?;
    let mut tien = TienParams::init(config.tien_config(tien_block), config.seed);
    train_tien(
        train_set,
        &pool,
        &mut tien,
        &config.tien_train_config(config.ablate_tien_steps),
    )?;
    let settings = ProposeSettings {
        boost,
        ..ProposeSettings::from_config(config)?
    };
    let results = propose_dataset(val_set, &tign, &tien, &settings)?;
    Ok(results.into_iter().map(|r| r.proposals).collect())
}
