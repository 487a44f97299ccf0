//! Temporal interval generation from score maps.
//!
//! Route one thresholds each relatedness row at τ, groups consecutive
//! supra-threshold columns, and keeps the run containing the reference
//! snippet. Route two first builds a binary weight row from the starting and
//! ending argmaxes, averages it into the relatedness row, and applies the
//! same run selection to the weighted scores.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::tign::ScoreMaps;
use srg_tensor::Tensor;

/// Which score sequence produced an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IntervalSource {
    /// Relatedness scores (route one).
    Rs,
    /// Weighted relatedness scores (route two).
    Wrs,
}

impl std::fmt::Display for IntervalSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IntervalSource::Rs => write!(f, "RS"),
            IntervalSource::Wrs => write!(f, "WRS"),
        }
    }
}

impl std::str::FromStr for IntervalSource {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RS" => Ok(IntervalSource::Rs),
            "WRS" => Ok(IntervalSource::Wrs),
            other => Err(CoreError::Argument(format!(
                "unknown interval source {other:?}"
            ))),
        }
    }
}

/// Candidate span in snippet indices, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalInterval {
    pub t_start: usize,
    pub t_end: usize,
    pub source: IntervalSource,
    pub tau: f32,
    /// Reference snippet whose score row produced this interval.
    pub ref_index: usize,
}

impl TemporalInterval {
    pub fn span_len(&self) -> usize {
        self.t_end - self.t_start + 1
    }
}

/// Per-row binary weight map derived from boundary argmaxes (columns share
/// the relatedness map's offset coordinates).
#[derive(Debug, Clone)]
pub struct BinaryWeightMap {
    pub weights: Tensor,
    pub n_nbr: usize,
}

fn center_run_bounds(
    row: impl Fn(usize) -> f32,
    width: usize,
    center: usize,
    tau: f32,
) -> Option<(usize, usize)> {
    if row(center) < tau {
        return None;
    }
    let mut lo = center;
    while lo > 0 && row(lo - 1) >= tau {
        lo -= 1;
    }
    let mut hi = center;
    while hi + 1 < width && row(hi + 1) >= tau {
        hi += 1;
    }
    Some((lo, hi))
}

fn clip_to_sequence(
    i: usize,
    n_nbr: usize,
    snippet_count: usize,
    lo_col: usize,
    hi_col: usize,
) -> (usize, usize) {
    let abs = |col: usize| i as isize + col as isize - n_nbr as isize;
    let t_start = abs(lo_col).max(0) as usize;
    let t_end = (abs(hi_col).min(snippet_count as isize - 1)).max(0) as usize;
    (t_start, t_end)
}

/// Route one: intervals from the relatedness map at threshold `tau`.
pub fn gen_intervals_rs(maps: &ScoreMaps, tau: f32) -> Result<Vec<TemporalInterval>> {
    check_tau(tau)?;
    let (rows, width) = maps.relatedness.dims2("gen_intervals_rs")?;
    let n_nbr = maps.n_nbr;
    let mut out = Vec::new();
    for i in 0..rows {
        let row = |c: usize| maps.relatedness.at2(i, c);
        if let Some((lo, hi)) = center_run_bounds(row, width, n_nbr, tau) {
            let (t_start, t_end) = clip_to_sequence(i, n_nbr, rows, lo, hi);
            out.push(TemporalInterval {
                t_start,
                t_end,
                source: IntervalSource::Rs,
                tau,
                ref_index: i,
            });
        }
    }
    Ok(out)
}

/// Binary weight rows from starting/ending argmaxes. A row whose either
/// argmax lands on "none" (or whose implied span is empty) is all zeros.
pub fn binary_weight_map(maps: &ScoreMaps) -> Result<BinaryWeightMap> {
    let (rows, w_b) = maps.starting.dims2("binary_weight_map")?;
    let n_nbr = maps.n_nbr;
    let width = 2 * n_nbr + 1;
    let none_col = w_b - 1;
    let mut weights = Tensor::zeros(&[rows, width]);
    for i in 0..rows {
        let argmax = |map: &Tensor| -> usize {
            let mut best = 0usize;
            for c in 1..w_b {
                if map.at2(i, c) > map.at2(i, best) {
                    best = c;
                }
            }
            best
        };
        let start_offset = argmax(&maps.starting);
        let end_offset = argmax(&maps.ending);
        if start_offset == none_col || end_offset == none_col {
            continue;
        }
        // offsets point backward for starts and forward for ends
        let start_col = n_nbr - start_offset;
        let end_col = n_nbr + end_offset;
        if start_col > end_col {
            continue;
        }
        for c in start_col..=end_col {
            weights.set2(i, c, 1.0);
        }
    }
    Ok(BinaryWeightMap { weights, n_nbr })
}

/// Route two: average the binary weights into the relatedness scores, then
/// apply the route-one selection to the result.
pub fn gen_intervals_wrs(maps: &ScoreMaps, tau: f32) -> Result<Vec<TemporalInterval>> {
    check_tau(tau)?;
    let weight_map = binary_weight_map(maps)?;
    let (rows, width) = maps.relatedness.dims2("gen_intervals_wrs")?;
    let n_nbr = maps.n_nbr;
    let mut out = Vec::new();
    for i in 0..rows {
        let row = |c: usize| (maps.relatedness.at2(i, c) + weight_map.weights.at2(i, c)) / 2.0;
        if let Some((lo, hi)) = center_run_bounds(row, width, n_nbr, tau) {
            let (t_start, t_end) = clip_to_sequence(i, n_nbr, rows, lo, hi);
            out.push(TemporalInterval {
                t_start,
                t_end,
                source: IntervalSource::Wrs,
                tau,
                ref_index: i,
            });
        }
    }
    Ok(out)
}

fn check_tau(tau: f32) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(CoreError::Argument(format!("tau {tau} outside (0,1)")));
    }
    Ok(())
}

/// Union of the given routes over a threshold schedule. Exact duplicate
/// spans are merged keeping the first occurrence's metadata; the count of
/// unique spans is the set size.
pub fn gen_union(
    maps: &ScoreMaps,
    tau_values: &[f32],
    sources: &[IntervalSource],
) -> Result<Vec<TemporalInterval>> {
    if tau_values.is_empty() {
        return Err(CoreError::Argument("empty tau schedule".into()));
    }
    if sources.is_empty() {
        return Err(CoreError::Argument("no interval sources selected".into()));
    }
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut out = Vec::new();
    for &source in sources {
        for &tau in tau_values {
            let intervals = match source {
                IntervalSource::Rs => gen_intervals_rs(maps, tau)?,
                IntervalSource::Wrs => gen_intervals_wrs(maps, tau)?,
            };
            for interval in intervals {
                if seen.insert((interval.t_start, interval.t_end)) {
                    out.push(interval);
                }
            }
        }
    }
    Ok(out)
}

/// Union of both routes over a threshold schedule.
pub fn gen_all(maps: &ScoreMaps, tau_values: &[f32]) -> Result<Vec<TemporalInterval>> {
    gen_union(
        maps,
        tau_values,
        &[IntervalSource::Rs, IntervalSource::Wrs],
    )
}

/// The default τ schedule: start at `start`, step by `step`, stop at `stop`
/// inclusive (floating-point safe construction over integer multiples).
pub fn tau_schedule(start: f64, step: f64, stop: f64) -> Result<Vec<f32>> {
    if step <= 0.0 || start <= 0.0 || stop >= 1.0 || start > stop {
        return Err(CoreError::Config(format!(
            "invalid tau schedule ({start}:{step}:{stop})"
        )));
    }
    let count = ((stop - start) / step).round() as usize + 1;
    Ok((0..count).map(|k| (start + step * k as f64) as f32).collect())
}

/// Tab-separated interval dump: `video_id  t_start  t_end  source  tau`.
pub fn save_intervals(path: &Path, per_video: &[(String, Vec<TemporalInterval>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# video_id\tt_start\tt_end\tsource\ttau")?;
    for (video_id, intervals) in per_video {
        for interval in intervals {
            writeln!(
                w,
                "{video_id}\t{}\t{}\t{}\t{:.2}",
                interval.t_start, interval.t_end, interval.source, interval.tau
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_intervals(path: &Path) -> Result<Vec<(String, Vec<TemporalInterval>)>> {
    let display = path.display().to_string();
    let mut out: Vec<(String, Vec<TemporalInterval>)> = Vec::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split('\t').collect();
        if fields.len() != 5 {
            return Err(CoreError::ParseLine {
                path: display,
                line: line_no,
                detail: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let err = |detail: String| CoreError::ParseLine {
            path: display.clone(),
            line: line_no,
            detail,
        };
        let t_start: usize = fields[1]
            .parse()
            .map_err(|_| err(format!("bad t_start {:?}", fields[1])))?;
        let t_end: usize = fields[2]
            .parse()
            .map_err(|_| err(format!("bad t_end {:?}", fields[2])))?;
        let source: IntervalSource = fields[3].parse()?;
        let tau: f32 = fields[4]
            .parse()
            .map_err(|_| err(format!("bad tau {:?}", fields[4])))?;
        let interval = TemporalInterval {
            t_start,
            t_end,
            source,
            tau,
            ref_index: t_start,
        };
        match out.last_mut() {
            Some((id, list)) if *id == fields[0] => list.push(interval),
            _ => out.push((fields[0].to_string(), vec![interval])),
        }
    }
    Ok(out)
}
