//! Timeline and annotation data model. All positions are 0-based snippet
//! indices with inclusive start/end; frame units appear only in [`VideoMeta`].

mod io;
mod labels;
mod synth;

pub use io::{
    load_annotations, load_dataset, load_features, save_annotations, save_dataset, save_features,
};
pub use labels::{annotate_label_maps, LabelMaps};
pub use synth::{synth_generate, SynthConfig};

use crate::error::{CoreError, Result};
use srg_tensor::Tensor;

/// Frame-level metadata of one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoMeta {
    pub video_id: String,
    /// Total frame count (N_V).
    pub frame_count: usize,
    /// Frames per snippet (N_s).
    pub frames_per_snippet: usize,
    /// Snippet count: floor(frame_count / frames_per_snippet).
    pub snippet_count: usize,
}

impl VideoMeta {
    pub fn new(video_id: impl Into<String>, frame_count: usize, frames_per_snippet: usize) -> Result<Self> {
        if frames_per_snippet == 0 {
            return Err(CoreError::Validation(
                "frames_per_snippet must be >= 1".into(),
            ));
        }
        let snippet_count = frame_count / frames_per_snippet;
        if snippet_count == 0 {
            return Err(CoreError::Validation(format!(
                "{} frames at {} frames/snippet yields no snippets",
                frame_count, frames_per_snippet
            )));
        }
        Ok(VideoMeta {
            video_id: video_id.into(),
            frame_count,
            frames_per_snippet,
            snippet_count,
        })
    }
}

/// One annotated action span, in snippet units, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruthInstance {
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
}

impl GroundTruthInstance {
    /// Length in snippets (inclusive span).
    pub fn span_len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, snippet: usize) -> bool {
        self.start <= snippet && snippet <= self.end
    }
}

/// Check ordering, bounds, and non-overlap of one video's instances.
pub fn validate_instances(instances: &[GroundTruthInstance], snippet_count: usize) -> Result<()> {
    for (idx, inst) in instances.iter().enumerate() {
        if inst.start > inst.end {
            return Err(CoreError::Validation(format!(
                "instance {idx}: start {} > end {}",
                inst.start, inst.end
            )));
        }
        if inst.end >= snippet_count {
            return Err(CoreError::Validation(format!(
                "instance {idx}: end {} outside sequence of {snippet_count} snippets",
                inst.end
            )));
        }
    }
    for (idx, pair) in instances.windows(2).enumerate() {
        if pair[1].start <= pair[0].end {
            return Err(CoreError::Validation(format!(
                "instances {idx} and {} overlap or are unsorted: [{},{}] then [{},{}]",
                idx + 1,
                pair[0].start,
                pair[0].end,
                pair[1].start,
                pair[1].end
            )));
        }
    }
    Ok(())
}

/// Per-video appearance and motion snippet features, shape `[d, L_S]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub appearance: Tensor,
    pub motion: Tensor,
}

impl FeatureSequence {
    pub fn new(appearance: Tensor, motion: Tensor) -> Result<Self> {
        let (_, la) = appearance.dims2("feature_sequence").map_err(CoreError::from)?;
        let (_, lm) = motion.dims2("feature_sequence").map_err(CoreError::from)?;
        if la != lm {
            return Err(CoreError::Validation(format!(
                "appearance covers {la} snippets but motion covers {lm}"
            )));
        }
        Ok(FeatureSequence { appearance, motion })
    }

    pub fn snippet_count(&self) -> usize {
        self.appearance.shape()[1]
    }

    pub fn appearance_dim(&self) -> usize {
        self.appearance.shape()[0]
    }

    pub fn motion_dim(&self) -> usize {
        self.motion.shape()[0]
    }
}

/// One video with features and ground truth.
#[derive(Debug, Clone)]
pub struct VideoRecord {
    pub meta: VideoMeta,
    pub features: FeatureSequence,
    pub instances: Vec<GroundTruthInstance>,
}

/// An ordered collection of videos; order is part of the dataset identity so
/// that seeded iteration is reproducible.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub videos: Vec<VideoRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn total_instances(&self) -> usize {
        self.videos.iter().map(|v| v.instances.len()).sum()
    }
}
