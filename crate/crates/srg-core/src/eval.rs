//! Proposal-quality metrics: temporal IoU, Recall@tIoU@AN, average recall,
//! and the area under the AR-vs-AN curve.
//!
//! Spans are inclusive snippet coordinates evaluated on the real-interval
//! representation `[start, end + 1)`, so a one-snippet span has length 1.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::GroundTruthInstance;
use crate::error::{CoreError, Result};
use crate::tien::Proposal;

/// Inclusive snippet span with real-valued endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if end < start {
            return Err(CoreError::Argument(format!(
                "degenerate span: end {end} < start {start}"
            )));
        }
        Ok(Span { start, end })
    }

    pub fn from_instance(inst: &GroundTruthInstance) -> Self {
        Span {
            start: inst.start as f64,
            end: inst.end as f64,
        }
    }

    fn real_len(&self) -> f64 {
        self.end - self.start + 1.0
    }
}

/// Temporal intersection-over-union of two inclusive spans.
pub fn tiou(a: Span, b: Span) -> f64 {
    let inter = (a.end.min(b.end) + 1.0 - a.start.max(b.start)).max(0.0);
    let union = a.real_len() + b.real_len() - inter;
    inter / union
}

/// How top-AN truncation is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnMode {
    /// Take the AN highest-scored proposals of every video.
    PerVideo,
    /// Take the `AN · video_count` highest-scored proposals corpus-wide.
    Corpus,
}

#[derive(Debug, Clone)]
pub struct MetricConfig {
    pub tiou_thresholds: Vec<f64>,
    pub an_values: Vec<usize>,
    /// Inclusive AN range averaged by [`auc_ar_an`].
    pub auc_an_range: (usize, usize),
    pub an_mode: AnMode,
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tiou_thresholds.is_empty() {
            return Err(CoreError::Config("no tIoU thresholds".into()));
        }
        for pair in self.tiou_thresholds.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CoreError::Config(
                    "tIoU thresholds must be strictly increasing".into(),
                ));
            }
        }
        for &t in &self.tiou_thresholds {
            if !(t > 0.0 && t <= 1.0) {
                return Err(CoreError::Config(format!("tIoU threshold {t} outside (0,1]")));
            }
        }
        if self.auc_an_range.0 == 0 || self.auc_an_range.0 > self.auc_an_range.1 {
            return Err(CoreError::Config("bad AUC AN range".into()));
        }
        Ok(())
    }
}

/// Construct a strictly increasing threshold list from `start` to `stop`
/// (inclusive) in integer multiples of `step`.
pub fn threshold_range(start: f64, step: f64, stop: f64) -> Result<Vec<f64>> {
    if step <= 0.0 || start <= 0.0 || stop > 1.0 || start > stop {
        return Err(CoreError::Config(format!(
            "invalid threshold range ({start}:{step}:{stop})"
        )));
    }
    let count = ((stop - start) / step).round() as usize + 1;
    Ok((0..count).map(|k| start + step * k as f64).collect())
}

/// One video's proposals (any order) and ground truth.
#[derive(Debug, Clone, Copy)]
pub struct EvalVideo<'a> {
    pub proposals: &'a [Proposal],
    pub ground_truth: &'a [GroundTruthInstance],
}

fn ranked_indices(proposals: &[Proposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        let pa = &proposals[a];
        let pb = &proposals[b];
        pb.confidence
            .partial_cmp(&pa.confidence)
            .unwrap()
            .then(pa.refined_start.partial_cmp(&pb.refined_start).unwrap())
            .then(pa.refined_end.partial_cmp(&pb.refined_end).unwrap())
    });
    order
}

/// Fraction of ground-truth instances covered at `threshold` by the top-AN
/// proposals, across the whole corpus.
pub fn recall_at(videos: &[EvalVideo], threshold: f64, an: usize, mode: AnMode) -> Result<f64> {
    let total: usize = videos.iter().map(|v| v.ground_truth.len()).sum();
    if total == 0 {
        return Err(CoreError::Argument("no ground-truth instances".into()));
    }
    let taken: Vec<Vec<usize>> = match mode {
        AnMode::PerVideo => videos
            .iter()
            .map(|v| {
                let mut order = ranked_indices(v.proposals);
                order.truncate(an);
                order
            })
            .collect(),
        AnMode::Corpus => {
            let budget = an * videos.len();
            let mut global: Vec<(usize, usize)> = Vec::new();
            for (vi, v) in videos.iter().enumerate() {
                for pi in 0..v.proposals.len() {
                    global.push((vi, pi));
                }
            }
            global.sort_by(|&(va, pa), &(vb, pb)| {
                let a = &videos[va].proposals[pa];
                let b = &videos[vb].proposals[pb];
                b.confidence
                    .partial_cmp(&a.confidence)
                    .unwrap()
                    .then(a.refined_start.partial_cmp(&b.refined_start).unwrap())
                    .then(a.refined_end.partial_cmp(&b.refined_end).unwrap())
                    .then(va.cmp(&vb))
            });
            global.truncate(budget);
            let mut taken = vec![Vec::new(); videos.len()];
            for (vi, pi) in global {
                taken[vi].push(pi);
            }
            taken
        }
    };
    let mut recalled = 0usize;
    for (v, picks) in videos.iter().zip(&taken) {
        for gt in v.ground_truth {
            let gt_span = Span::from_instance(gt);
            let hit = picks.iter().any(|&pi| {
                let p = &v.proposals[pi];
                tiou(p.refined_span(), gt_span) >= threshold
            });
            if hit {
                recalled += 1;
            }
        }
    }
    Ok(recalled as f64 / total as f64)
}

/// Mean of [`recall_at`] over the configured thresholds at fixed AN.
pub fn average_recall(videos: &[EvalVideo], config: &MetricConfig, an: usize) -> Result<f64> {
    config.validate()?;
    let mut acc = 0.0;
    for &threshold in &config.tiou_thresholds {
        acc += recall_at(videos, threshold, an, config.an_mode)?;
    }
    Ok(acc / config.tiou_thresholds.len() as f64)
}

/// Discrete mean of AR@AN over the configured AN range, scaled to a
/// percentage.
pub fn auc_ar_an(videos: &[EvalVideo], config: &MetricConfig) -> Result<f64> {
    config.validate()?;
    let (lo, hi) = config.auc_an_range;
    let mut acc = 0.0;
    for an in lo..=hi {
        acc += average_recall(videos, config, an)?;
    }
    Ok(100.0 * acc / (hi - lo + 1) as f64)
}

/// Recall of raw interval spans (no truncation, no scores); used to compare
/// interval sources structurally.
pub fn interval_recall(
    intervals_per_video: &[Vec<(usize, usize)>],
    ground_truth: &[&[GroundTruthInstance]],
    threshold: f64,
) -> Result<f64> {
    let total: usize = ground_truth.iter().map(|g| g.len()).sum();
    if total == 0 {
        return Err(CoreError::Argument("no ground-truth instances".into()));
    }
    let mut recalled = 0usize;
    for (intervals, gts) in intervals_per_video.iter().zip(ground_truth) {
        for gt in *gts {
            let gt_span = Span::from_instance(gt);
            let hit = intervals.iter().any(|&(s, e)| {
                tiou(
                    Span {
                        start: s as f64,
                        end: e as f64,
                    },
                    gt_span,
                ) >= threshold
            });
            if hit {
                recalled += 1;
            }
        }
    }
    Ok(recalled as f64 / total as f64)
}

/// Uniform-random proposals over a sequence, for in-run baselines: random
/// start, random length up to the sequence end, random confidence.
pub fn uniform_random_proposals(
    rng: &mut ChaCha8Rng,
    snippet_count: usize,
    count: usize,
) -> Vec<Proposal> {
    (0..count)
        .map(|_| {
            let start = rng.gen_range(0..snippet_count);
            let len = rng.gen_range(1..=snippet_count - start);
            let end = start + len - 1;
            Proposal {
                t_start: start,
                t_end: end,
                offset_start: 0.0,
                offset_end: 0.0,
                confidence: rng.gen_range(0.0..1.0),
                refined_start: start as f64,
                refined_end: end as f64,
            }
        })
        .collect()
}

/// Metrics CSV: `metric,an,tiou,value`, one row per point.
pub fn write_metrics_csv<W: std::io::Write>(
    mut w: W,
    videos: &[EvalVideo],
    config: &MetricConfig,
) -> Result<()> {
    config.validate()?;
    writeln!(w, "metric,an,tiou,value")?;
    for &an in &config.an_values {
        for &threshold in &config.tiou_thresholds {
            let r = recall_at(videos, threshold, an, config.an_mode)?;
            writeln!(w, "recall,{an},{threshold:.2},{r:.6}")?;
        }
        let ar = average_recall(videos, config, an)?;
        writeln!(w, "ar,{an},,{ar:.6}")?;
    }
    let auc = auc_ar_an(videos, config)?;
    writeln!(w, "auc,,,{auc:.6}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn proposal(start: f64, end: f64, confidence: f64) -> Proposal {
        Proposal {
            t_start: start as usize,
            t_end: end as usize,
            offset_start: 0.0,
            offset_end: 0.0,
            confidence,
            refined_start: start,
            refined_end: end,
        }
    }

    fn gt(start: usize, end: usize) -> GroundTruthInstance {
        GroundTruthInstance {
            start,
            end,
            class_id: 0,
        }
    }

    #[test]
    fn tiou_basics() {
        let a = Span::new(10.0, 19.0).unwrap();
        assert_eq!(tiou(a, a), 1.0);
        let b = Span::new(30.0, 40.0).unwrap();
        assert_eq!(tiou(a, b), 0.0);
        let c = Span::new(15.0, 24.0).unwrap();
        assert!((tiou(a, c) - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(tiou(a, c), tiou(c, a));
        assert!(Span::new(5.0, 4.0).is_err());
    }

    #[test]
    fn perfect_proposals_reach_full_recall() {
        let gts = vec![gt(2, 8), gt(12, 20)];
        let proposals = vec![proposal(2.0, 8.0, 0.9), proposal(12.0, 20.0, 0.8)];
        let videos = [EvalVideo {
            proposals: &proposals,
            ground_truth: &gts,
        }];
        for threshold in [0.5, 0.75, 1.0] {
            assert_eq!(
                recall_at(&videos, threshold, 10, AnMode::PerVideo).unwrap(),
                1.0
            );
        }
        let config = MetricConfig {
            tiou_thresholds: threshold_range(0.5, 0.05, 0.9).unwrap(),
            an_values: vec![10],
            auc_an_range: (1, 10),
            an_mode: AnMode::PerVideo,
        };
        assert_eq!(average_recall(&videos, &config, 10).unwrap(), 1.0);
    }

    #[test]
    fn zero_proposals_zero_recall() {
        let gts = vec![gt(2, 8)];
        let videos = [EvalVideo {
            proposals: &[],
            ground_truth: &gts,
        }];
        assert_eq!(recall_at(&videos, 0.5, 100, AnMode::PerVideo).unwrap(), 0.0);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        let proposals = vec![proposal(0.0, 5.0, 0.5)];
        let videos = [EvalVideo {
            proposals: &proposals,
            ground_truth: &[],
        }];
        assert!(recall_at(&videos, 0.5, 10, AnMode::PerVideo).is_err());
    }

    /// Brute-force reference: for every video take the top-AN by confidence
    /// (ties by earlier span), mark ground truth covered at the threshold.
    fn recall_oracle(videos: &[EvalVideo], threshold: f64, an: usize) -> f64 {
        let mut recalled = 0usize;
        let mut total = 0usize;
        for v in videos {
            let mut scored: Vec<&Proposal> = v.proposals.iter().collect();
            scored.sort_by(|a, b| {
                b.confidence
                    .partial_cmp(&a.confidence)
                    .unwrap()
                    .then(a.refined_start.partial_cmp(&b.refined_start).unwrap())
                    .then(a.refined_end.partial_cmp(&b.refined_end).unwrap())
            });
            scored.truncate(an);
            for g in v.ground_truth {
                total += 1;
                if scored
                    .iter()
                    .any(|p| tiou(p.refined_span(), Span::from_instance(g)) >= threshold)
                {
                    recalled += 1;
                }
            }
        }
        recalled as f64 / total as f64
    }

    fn random_corpus(
        rng: &mut ChaCha8Rng,
    ) -> (Vec<Vec<Proposal>>, Vec<Vec<GroundTruthInstance>>) {
        let n_videos = rng.gen_range(1..6);
        let mut all_props = Vec::new();
        let mut all_gts = Vec::new();
        for _ in 0..n_videos {
            let len = rng.gen_range(20..60);
            let n_props = rng.gen_range(0..30);
            let props: Vec<Proposal> = (0..n_props)
                .map(|_| {
                    let s = rng.gen_range(0..len);
                    let e = rng.gen_range(s..len);
                    proposal(s as f64, e as f64, rng.gen_range(0.0..1.0))
                })
                .collect();
            let mut gts = Vec::new();
            let mut pos = 0;
            while pos + 3 < len {
                let start = pos + rng.gen_range(1..5);
                if start + 2 >= len {
                    break;
                }
                let end = (start + rng.gen_range(1..6)).min(len - 1);
                gts.push(gt(start, end));
                pos = end + 1;
            }
            if gts.is_empty() {
                gts.push(gt(0, 1));
            }
            all_props.push(props);
            all_gts.push(gts);
        }
        (all_props, all_gts)
    }

    #[test]
    fn recall_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..60 {
            let (props, gts) = random_corpus(&mut rng);
            let videos: Vec<EvalVideo> = props
                .iter()
                .zip(&gts)
                .map(|(p, g)| EvalVideo {
                    proposals: p,
                    ground_truth: g,
                })
                .collect();
            let threshold = rng.gen_range(0.3..0.9);
            let an = rng.gen_range(1..20);
            let got = recall_at(&videos, threshold, an, AnMode::PerVideo).unwrap();
            let expected = recall_oracle(&videos, threshold, an);
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn ar_is_mean_of_recalls_and_auc_is_scaled_mean_of_ars() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let (props, gts) = random_corpus(&mut rng);
        let videos: Vec<EvalVideo> = props
            .iter()
            .zip(&gts)
            .map(|(p, g)| EvalVideo {
                proposals: p,
                ground_truth: g,
            })
            .collect();
        let config = MetricConfig {
            tiou_thresholds: threshold_range(0.5, 0.05, 0.9).unwrap(),
            an_values: vec![5, 10],
            auc_an_range: (1, 15),
            an_mode: AnMode::PerVideo,
        };
        let ar = average_recall(&videos, &config, 7).unwrap();
        let mut manual = 0.0;
        for &t in &config.tiou_thresholds {
            manual += recall_at(&videos, t, 7, AnMode::PerVideo).unwrap();
        }
        manual /= config.tiou_thresholds.len() as f64;
        assert!((ar - manual).abs() < 1e-12);

        let auc = auc_ar_an(&videos, &config).unwrap();
        let mut manual_auc = 0.0;
        for an in 1..=15 {
            manual_auc += average_recall(&videos, &config, an).unwrap();
        }
        manual_auc = 100.0 * manual_auc / 15.0;
        assert!((auc - manual_auc).abs() < 1e-9);
        assert!((0.0..=100.0).contains(&auc));
    }

    #[test]
    fn recall_monotonic_in_threshold_and_an() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let (props, gts) = random_corpus(&mut rng);
        let videos: Vec<EvalVideo> = props
            .iter()
            .zip(&gts)
            .map(|(p, g)| EvalVideo {
                proposals: p,
                ground_truth: g,
            })
            .collect();
        let mut last = 1.0;
        for threshold in [0.3, 0.5, 0.7, 0.9] {
            let r = recall_at(&videos, threshold, 10, AnMode::PerVideo).unwrap();
            assert!(r <= last + 1e-12);
            last = r;
        }
        let mut last = 0.0;
        for an in [1, 2, 5, 10, 50] {
            let r = recall_at(&videos, 0.5, an, AnMode::PerVideo).unwrap();
            assert!(r >= last - 1e-12);
            last = r;
        }
    }

    #[test]
    fn order_permutation_preserving_ranking_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let (mut props, gts) = random_corpus(&mut rng);
        let videos: Vec<EvalVideo> = props
            .iter()
            .zip(&gts)
            .map(|(p, g)| EvalVideo {
                proposals: p,
                ground_truth: g,
            })
            .collect();
        let before = recall_at(&videos, 0.5, 5, AnMode::PerVideo).unwrap();
        drop(videos);
        for p in &mut props {
            p.reverse();
        }
        let videos: Vec<EvalVideo> = props
            .iter()
            .zip(&gts)
            .map(|(p, g)| EvalVideo {
                proposals: p,
                ground_truth: g,
            })
            .collect();
        let after = recall_at(&videos, 0.5, 5, AnMode::PerVideo).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn corpus_mode_uses_global_budget() {
        // two videos; all good proposals live in video 0
        let gts0 = vec![gt(0, 4)];
        let gts1 = vec![gt(0, 4)];
        let props0 = vec![proposal(0.0, 4.0, 0.9), proposal(0.0, 4.0, 0.8)];
        let props1 = vec![proposal(20.0, 30.0, 0.1)];
        let videos = [
            EvalVideo {
                proposals: &props0,
                ground_truth: &gts0,
            },
            EvalVideo {
                proposals: &props1,
                ground_truth: &gts1,
            },
        ];
        // AN=1 corpus-wide budget of 2 picks both video-0 proposals
        let corpus = recall_at(&videos, 0.5, 1, AnMode::Corpus).unwrap();
        let per_video = recall_at(&videos, 0.5, 1, AnMode::PerVideo).unwrap();
        assert_eq!(corpus, 0.5);
        assert_eq!(per_video, 0.5);
    }
}
