//! Feature and annotation files.
//!
//! Features: magic `SRGF`, u32 version=1, u32 snippet count, u32 appearance
//! dim, u32 motion dim, then f32 little-endian appearance data (channel-major)
//! followed by motion data.
//!
//! Annotations: UTF-8 tab-separated lines `video_id  start  end  class_id`,
//! one instance per line, `#` comments permitted.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{
    validate_instances, Dataset, FeatureSequence, GroundTruthInstance, VideoMeta, VideoRecord,
};
use crate::error::{CoreError, Result};
use srg_tensor::Tensor;

pub const FEATURE_MAGIC: [u8; 4] = *b"SRGF";
pub const FEATURE_VERSION: u32 = 1;

pub fn save_features(path: &Path, features: &FeatureSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&(features.snippet_count() as u32).to_le_bytes())?;
    w.write_all(&(features.appearance_dim() as u32).to_le_bytes())?;
    w.write_all(&(features.motion_dim() as u32).to_le_bytes())?;
    for &v in features.appearance.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in features.motion.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    let mut r = OffsetReader {
        inner: BufReader::new(File::open(path)?),
        pos: 0,
    };
    let magic = r.bytes::<4>("magic")?;
    if magic != FEATURE_MAGIC {
        return Err(CoreError::FeatureParse {
            offset: 0,
            detail: format!("bad magic {magic:?}, expected \"SRGF\""),
        });
    }
    let version = r.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(CoreError::FeatureParse {
            offset: 4,
            detail: format!("unsupported version {version}"),
        });
    }
    let snippet_count = r.u32("snippet count")? as usize;
    let d_a = r.u32("appearance dim")? as usize;
    let d_m = r.u32("motion dim")? as usize;
    if snippet_count == 0 || d_a == 0 || d_m == 0 {
        return Err(CoreError::FeatureParse {
            offset: 8,
            detail: format!("degenerate dims: L_S={snippet_count} d_a={d_a} d_m={d_m}"),
        });
    }
    let read_matrix = |r: &mut OffsetReader<BufReader<File>>, rows: usize| -> Result<Tensor> {
        let mut data = vec![0.0f32; rows * snippet_count];
        for v in data.iter_mut() {
            *v = f32::from_le_bytes(r.bytes::<4>("feature data")?);
        }
        Ok(Tensor::new(vec![rows, snippet_count], data).expect("shape"))
    };
    let appearance = read_matrix(&mut r, d_a)?;
    let motion = read_matrix(&mut r, d_m)?;
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(CoreError::FeatureParse {
            offset: r.pos,
            detail: "trailing bytes after feature data".into(),
        });
    }
    Ok(FeatureSequence { appearance, motion })
}

struct OffsetReader<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> OffsetReader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| CoreError::FeatureParse {
                offset: self.pos,
                detail: format!("truncated while reading {what}"),
            })?;
        self.pos += N as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(what)?))
    }
}

pub fn save_annotations(path: &Path, videos: &[(String, Vec<GroundTruthInstance>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# video_id\tstart\tend\tclass_id")?;
    for (video_id, instances) in videos {
        for inst in instances {
            writeln!(w, "{video_id}\t{}\t{}\t{}", inst.start, inst.end, inst.class_id)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load annotations grouped by video id. Instances are required to arrive
/// sorted and non-overlapping per video.
pub fn load_annotations(path: &Path) -> Result<BTreeMap<String, Vec<GroundTruthInstance>>> {
    let file = File::open(path)?;
    let display = path.display().to_string();
    let mut out: BTreeMap<String, Vec<GroundTruthInstance>> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
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
                detail: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| CoreError::ParseLine {
                path: display.clone(),
                line: line_no,
                detail: format!("invalid {what}: {s:?}"),
            })
        };
        let inst = GroundTruthInstance {
            start: parse(fields[1], "start")?,
            end: parse(fields[2], "end")?,
            class_id: parse(fields[3], "class_id")?,
        };
        if inst.start > inst.end {
            return Err(CoreError::ParseLine {
                path: display,
                line: line_no,
                detail: format!("start {} > end {}", inst.start, inst.end),
            });
        }
        out.entry(fields[0].to_string()).or_default().push(inst);
    }
    for (video_id, instances) in &out {
        validate_instances(instances, usize::MAX)
            .map_err(|e| CoreError::Validation(format!("video {video_id}: {e}")))?;
    }
    Ok(out)
}

/// Write a dataset directory: `features/<id>.srgf` plus `annotations.tsv`.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir.join("features"))?;
    let mut annotations = Vec::new();
    for video in &dataset.videos {
        save_features(
            &dir.join("features").join(format!("{}.srgf", video.meta.video_id)),
            &video.features,
        )?;
        annotations.push((video.meta.video_id.clone(), video.instances.clone()));
    }
    save_annotations(&dir.join("annotations.tsv"), &annotations)?;
    Ok(())
}

/// Load a dataset directory written by [`save_dataset`]. Videos come back
/// sorted by id so iteration order is reproducible.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let features_dir = dir.join("features");
    let mut ids: Vec<String> = fs::read_dir(&features_dir)?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            name.strip_suffix(".srgf").map(str::to_string)
        })
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(CoreError::Validation(format!(
            "no .srgf files under {}",
            features_dir.display()
        )));
    }
    let mut annotations = load_annotations(&dir.join("annotations.tsv"))?;
    let mut videos = Vec::with_capacity(ids.len());
    for id in ids {
        let features = load_features(&features_dir.join(format!("{id}.srgf")))?;
        let snippet_count = features.snippet_count();
        let instances = annotations.remove(&id).unwrap_or_default();
        validate_instances(&instances, snippet_count)
            .map_err(|e| CoreError::Validation(format!("video {id}: {e}")))?;
        videos.push(VideoRecord {
            meta: VideoMeta::new(id, snippet_count, 1)?,
            features,
            instances,
        });
    }
    if let Some(orphan) = annotations.keys().next() {
        return Err(CoreError::Validation(format!(
            "annotations reference missing video {orphan}"
        )));
    }
    Ok(Dataset { videos })
}
