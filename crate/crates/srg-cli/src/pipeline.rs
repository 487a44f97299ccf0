//! End-to-end proposal generation for a dataset: score maps → intervals →
//! confidence/offsets → optional relatedness boost → NMS → top-K.

use anyhow::Result;
use rayon::prelude::*;

use crate::config::{IntervalSourceSel, RunConfig};
use srg_core::data::Dataset;
use srg_core::intervals::{gen_union, IntervalSource, TemporalInterval};
use srg_core::post::{boost_scores, nms, NmsConfig};
use srg_core::tien::{score_intervals, Proposal, TienParams};
use srg_core::tign::{infer_score_maps, ScoreMaps, TignParams};

#[derive(Debug, Clone)]
pub struct ProposeSettings {
    pub taus: Vec<f32>,
    pub source: IntervalSourceSel,
    pub boost: bool,
    pub nms: NmsConfig,
    pub max_proposals: usize,
}

impl ProposeSettings {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        Ok(ProposeSettings {
            taus: config.taus()?,
            source: config.interval_source,
            boost: config.boost,
            nms: config.nms_config()?,
            max_proposals: config.max_proposals,
        })
    }

    fn sources(&self) -> Vec<IntervalSource> {
        match self.source {
            IntervalSourceSel::Rs => vec![IntervalSource::Rs],
            IntervalSourceSel::Wrs => vec![IntervalSource::Wrs],
            IntervalSourceSel::Both => vec![IntervalSource::Rs, IntervalSource::Wrs],
        }
    }
}

/// Everything produced for one video on the way to its proposals.
pub struct VideoProposals {
    pub video_id: String,
    pub maps: ScoreMaps,
    pub intervals: Vec<TemporalInterval>,
    pub proposals: Vec<Proposal>,
}

pub fn propose_video(
    video_id: &str,
    features: &srg_core::data::FeatureSequence,
    tign: &TignParams,
    tien: &TienParams,
    settings: &ProposeSettings,
) -> Result<VideoProposals> {
    let maps = infer_score_maps(tign, features)?;
    let intervals = gen_union(&maps, &settings.taus, &settings.sources())?;
    let scored = score_intervals(tien, features, &intervals)?;
    let scored = if settings.boost {
        boost_scores(&scored, Some(&maps))?
    } else {
        scored
    };
    let mut kept = nms(&scored, &settings.nms);
    kept.truncate(settings.max_proposals);
    Ok(VideoProposals {
        video_id: video_id.to_string(),
        maps,
        intervals,
        proposals: kept,
    })
}

/// Per-video proposal generation across a dataset. Videos are independent;
/// the output order matches the dataset order regardless of thread count.
pub fn propose_dataset(
    dataset: &Dataset,
    tign: &TignParams,
    tien: &TienParams,
    settings: &ProposeSettings,
) -> Result<Vec<VideoProposals>> {
    dataset
        .videos
        .par_iter()
        .map(|video| {
            propose_video(
                &video.meta.video_id,
                &video.features,
                tign,
                tien,
                settings,
            )
        })
        .collect()
}
