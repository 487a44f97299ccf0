//! Seed-reproducible synthetic corpus generation.
//!
//! Every action class owns fixed latent appearance/motion signature vectors.
//! Snippets inside an instance emit the class signature plus Gaussian noise;
//! background snippets emit a dedicated background signature plus noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, FeatureSequence, GroundTruthInstance, VideoMeta, VideoRecord};
use crate::error::{CoreError, Result};
use crate::seed::{self, tags};
use srg_tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_videos: usize,
    /// Inclusive range of snippet counts per video.
    pub snippet_count_range: (usize, usize),
    /// Inclusive range of instances per video.
    pub instances_per_video: (usize, usize),
    /// Inclusive range of instance lengths, in snippets.
    pub duration_range: (usize, usize),
    pub num_classes: usize,
    pub appearance_dim: usize,
    pub motion_dim: usize,
    /// Noise scale on in-instance snippets.
    pub signature_noise: f32,
    /// Noise scale on background snippets.
    pub background_noise: f32,
    pub seed: u64,
    /// Distinguishes splits drawn from the same master seed; train and
    /// validation share class signatures but not per-video randomness.
    pub split_salt: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("snippet count", self.snippet_count_range),
            ("duration", self.duration_range),
        ];
        for (name, (lo, hi)) in ranges {
            if lo == 0 || lo > hi {
                return Err(CoreError::Config(format!(
                    "{name} range ({lo}, {hi}) must be positive and ordered"
                )));
            }
        }
        let (ilo, ihi) = self.instances_per_video;
        if ilo > ihi {
            return Err(CoreError::Config(format!(
                "instance count range ({ilo}, {ihi}) must be ordered"
            )));
        }
        if self.num_videos == 0 || self.num_classes == 0 {
            return Err(CoreError::Config(
                "num_videos and num_classes must be positive".into(),
            ));
        }
        if self.appearance_dim == 0 || self.motion_dim == 0 {
            return Err(CoreError::Config("feature dims must be positive".into()));
        }
        if self.signature_noise < 0.0 || self.background_noise < 0.0 {
            return Err(CoreError::Config("noise levels must be >= 0".into()));
        }
        Ok(())
    }
}

/// Latent class signatures; index `num_classes` holds the background.
pub(crate) struct Signatures {
    appearance: Vec<Vec<f32>>,
    motion: Vec<Vec<f32>>,
}

impl Signatures {
    pub(crate) fn draw(config: &SynthConfig) -> Signatures {
        let mut rng = seed::rng(config.seed, tags::SIGNATURES);
        let draw_set = |rng: &mut ChaCha8Rng, dim: usize, count: usize| -> Vec<Vec<f32>> {
            (0..count)
                .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
                .collect()
        };
        let appearance = draw_set(&mut rng, config.appearance_dim, config.num_classes + 1);
        let motion = draw_set(&mut rng, config.motion_dim, config.num_classes + 1);
        Signatures { appearance, motion }
    }

    pub(crate) fn appearance_of(&self, class: usize) -> &[f32] {
        &self.appearance[class]
    }

    pub(crate) fn motion_of(&self, class: usize) -> &[f32] {
        &self.motion[class]
    }

    pub(crate) fn background_index(&self) -> usize {
        self.appearance.len() - 1
    }
}

/// Place `count` non-overlapping instances (separated by at least one
/// background snippet) into a sequence of `snippet_count` snippets.
fn place_instances(
    rng: &mut ChaCha8Rng,
    snippet_count: usize,
    count: usize,
    duration_range: (usize, usize),
    num_classes: usize,
) -> Option<Vec<GroundTruthInstance>> {
    if count == 0 {
        return Some(Vec::new());
    }
    let lengths: Vec<usize> = (0..count)
        .map(|_| rng.gen_range(duration_range.0..=duration_range.1))
        .collect();
    let occupied: usize = lengths.iter().sum::<usize>() + (count - 1);
    if occupied > snippet_count {
        return None;
    }
    // distribute the free slack over the count+1 gaps
    let slack = snippet_count - occupied;
    let mut gaps = vec![0usize; count + 1];
    for _ in 0..slack {
        let g = rng.gen_range(0..gaps.len());
        gaps[g] += 1;
    }
    let mut instances = Vec::with_capacity(count);
    let mut cursor = 0usize;
    for (idx, &len) in lengths.iter().enumerate() {
        cursor += gaps[idx];
        if idx > 0 {
            cursor += 1; // mandatory background snippet between instances
        }
        instances.push(GroundTruthInstance {
            start: cursor,
            end: cursor + len - 1,
            class_id: rng.gen_range(0..num_classes),
        });
        cursor += len;
    }
    Some(instances)
}

fn emit_features(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    signatures: &Signatures,
    instances: &[GroundTruthInstance],
    snippet_count: usize,
) -> FeatureSequence {
    let class_of = |snippet: usize| -> usize {
        instances
            .iter()
            .find(|inst| inst.contains(snippet))
            .map(|inst| inst.class_id)
            .unwrap_or(signatures.background_index())
    };
    let mut appearance = Tensor::zeros(&[config.appearance_dim, snippet_count]);
    let mut motion = Tensor::zeros(&[config.motion_dim, snippet_count]);
    for l in 0..snippet_count {
        let class = class_of(l);
        let noise = if class == signatures.background_index() {
            config.background_noise
        } else {
            config.signature_noise
        };
        for d in 0..config.appearance_dim {
            let n: f32 = StandardNormal.sample(rng);
            appearance.set2(d, l, signatures.appearance_of(class)[d] + noise * n);
        }
        for d in 0..config.motion_dim {
            let n: f32 = StandardNormal.sample(rng);
            motion.set2(d, l, signatures.motion_of(class)[d] + noise * n);
        }
    }
    FeatureSequence { appearance, motion }
}

/// Generate a dataset. Identical configs produce bit-identical datasets.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let signatures = Signatures::draw(config);
    let mut videos = Vec::with_capacity(config.num_videos);
    for v in 0..config.num_videos {
        let video_tag = tags::VIDEOS ^ (config.split_salt << 16) ^ ((v as u64) << 24);
        let mut rng = seed::rng(config.seed, video_tag);
        let snippet_count =
            rng.gen_range(config.snippet_count_range.0..=config.snippet_count_range.1);
        let requested = rng.gen_range(config.instances_per_video.0..=config.instances_per_video.1);
        // back off toward the configured minimum when a draw cannot fit
        let mut placed = None;
        let mut count = requested;
        loop {
            if let Some(instances) = place_instances(
                &mut rng,
                snippet_count,
                count,
                config.duration_range,
                config.num_classes,
            ) {
                placed = Some(instances);
                break;
            }
            if count == config.instances_per_video.0 {
                break;
            }
            count -= 1;
        }
        let instances = placed.ok_or_else(|| {
            CoreError::Generation(format!(
                "video {v}: cannot fit {requested} instances of {:?} snippets into {snippet_count}",
                config.duration_range
            ))
        })?;
        let features = emit_features(&mut rng, config, &signatures, &instances, snippet_count);
        videos.push(VideoRecord {
            meta: VideoMeta::new(format!("v{v:05}"), snippet_count, 1)?,
            features,
            instances,
        });
    }
    Ok(Dataset { videos })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SynthConfig {
        SynthConfig {
            num_videos: 8,
            snippet_count_range: (20, 40),
            instances_per_video: (1, 3),
            duration_range: (3, 8),
            num_classes: 4,
            appearance_dim: 6,
            motion_dim: 5,
            signature_noise: 0.1,
            background_noise: 0.1,
            seed: 99,
            split_salt: 0,
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let a = synth_generate(&tiny_config()).unwrap();
        let b = synth_generate(&tiny_config()).unwrap();
        assert_eq!(a.len(), b.len());
        for (va, vb) in a.videos.iter().zip(&b.videos) {
            assert_eq!(va.meta, vb.meta);
            assert_eq!(va.instances, vb.instances);
            assert_eq!(va.features.appearance.data(), vb.features.appearance.data());
            assert_eq!(va.features.motion.data(), vb.features.motion.data());
        }
    }

    #[test]
    fn different_split_same_signatures_different_videos() {
        let train = synth_generate(&tiny_config()).unwrap();
        let val = synth_generate(&SynthConfig {
            split_salt: 1,
            ..tiny_config()
        })
        .unwrap();
        assert_ne!(
            train.videos[0].features.appearance.data(),
            val.videos[0].features.appearance.data()
        );
    }

    #[test]
    fn zero_noise_makes_class_snippets_identical() {
        let config = SynthConfig {
            signature_noise: 0.0,
            background_noise: 0.0,
            ..tiny_config()
        };
        let data = synth_generate(&config).unwrap();
        // collect one reference vector per class, then demand equality
        let mut by_class: std::collections::BTreeMap<usize, Vec<f32>> = Default::default();
        for video in &data.videos {
            for inst in &video.instances {
                for l in inst.start..=inst.end {
                    let col: Vec<f32> = (0..video.features.appearance_dim())
                        .map(|d| video.features.appearance.at2(d, l))
                        .collect();
                    by_class
                        .entry(inst.class_id)
                        .and_modify(|expect| assert_eq!(expect, &col))
                        .or_insert(col);
                }
            }
        }
        assert!(!by_class.is_empty());
    }

    #[test]
    fn instances_are_valid_and_separated() {
        let data = synth_generate(&tiny_config()).unwrap();
        for video in &data.videos {
            super::super::validate_instances(&video.instances, video.meta.snippet_count).unwrap();
            for pair in video.instances.windows(2) {
                assert!(pair[1].start > pair[0].end + 1, "gap required");
            }
        }
    }

    #[test]
    fn nearest_signature_classifier_is_accurate() {
        let config = SynthConfig {
            num_videos: 20,
            signature_noise: 0.1,
            background_noise: 0.1,
            ..tiny_config()
        };
        let data = synth_generate(&config).unwrap();
        let signatures = Signatures::draw(&config);
        let mut correct = 0usize;
        let mut total = 0usize;
        for video in &data.videos {
            let truth = |l: usize| -> usize {
                video
                    .instances
                    .iter()
                    .find(|inst| inst.contains(l))
                    .map(|i| i.class_id)
                    .unwrap_or(signatures.background_index())
            };
            for l in 0..video.meta.snippet_count {
                let col: Vec<f32> = (0..config.appearance_dim)
                    .map(|d| video.features.appearance.at2(d, l))
                    .collect();
                let nearest = (0..=config.num_classes)
                    .min_by(|&a, &b| {
                        let da: f32 = signatures
                            .appearance_of(a)
                            .iter()
                            .zip(&col)
                            .map(|(s, x)| (s - x) * (s - x))
                            .sum();
                        let db: f32 = signatures
                            .appearance_of(b)
                            .iter()
                            .zip(&col)
                            .map(|(s, x)| (s - x) * (s - x))
                            .sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                total += 1;
                if nearest == truth(l) {
                    correct += 1;
                }
            }
        }
        let accuracy = correct as f64 / total as f64;
        assert!(accuracy > 0.99, "accuracy {accuracy}");
    }

    #[test]
    fn infeasible_layout_is_an_error() {
        let config = SynthConfig {
            snippet_count_range: (4, 4),
            instances_per_video: (3, 3),
            duration_range: (3, 3),
            ..tiny_config()
        };
        let err = synth_generate(&config).unwrap_err();
        assert!(err.to_string().contains("cannot fit"), "{err}");
    }
}
