//! Ground-truth score-map construction.
//!
//! For a reference snippet `i` the relatedness row marks every neighbor
//! offset whose snippet belongs to the same action instance as `i`; the
//! starting and ending rows are one-hot over the distance to the instance
//! boundary, with a trailing "none" index for background reference snippets.

use super::{validate_instances, GroundTruthInstance};
use crate::error::Result;
use srg_tensor::Tensor;

/// Label maps for one video.
///
/// Widths: relatedness `2·n_nbr + 1` (column `n_nbr` is the reference snippet
/// itself), starting/ending `n_nbr + 2` (offsets `0..=n_nbr` plus "none").
/// `valid_r` masks relatedness columns whose neighbor falls outside the
/// sequence; those cells carry no signal and are excluded from the loss.
#[derive(Debug, Clone)]
pub struct LabelMaps {
    pub relatedness: Tensor,
    pub starting: Tensor,
    pub ending: Tensor,
    pub valid_r: Tensor,
    pub n_nbr: usize,
}

impl LabelMaps {
    pub fn snippet_count(&self) -> usize {
        self.relatedness.shape()[0]
    }

    pub fn relatedness_width(&self) -> usize {
        2 * self.n_nbr + 1
    }

    pub fn boundary_width(&self) -> usize {
        self.n_nbr + 2
    }

    /// Column of the "none" index in the starting/ending maps.
    pub fn none_column(&self) -> usize {
        self.n_nbr + 1
    }
}

/// Build label maps from one video's instances.
///
/// Instances longer than the neighbor window still get clipped relatedness
/// runs, but a boundary offset beyond `n_nbr` cannot be expressed and is
/// labeled "none" for that row.
pub fn annotate_label_maps(
    instances: &[GroundTruthInstance],
    snippet_count: usize,
    n_nbr: usize,
) -> Result<LabelMaps> {
    validate_instances(instances, snippet_count)?;
    let w_r = 2 * n_nbr + 1;
    let w_b = n_nbr + 2;
    let none_col = n_nbr + 1;
    let mut relatedness = Tensor::zeros(&[snippet_count, w_r]);
    let mut starting = Tensor::zeros(&[snippet_count, w_b]);
    let mut ending = Tensor::zeros(&[snippet_count, w_b]);
    let mut valid_r = Tensor::zeros(&[snippet_count, w_r]);

    for i in 0..snippet_count {
        for col in 0..w_r {
            let neighbor = i as isize + col as isize - n_nbr as isize;
            if neighbor >= 0 && (neighbor as usize) < snippet_count {
                valid_r.set2(i, col, 1.0);
            }
        }
        match instances.iter().find(|inst| inst.contains(i)) {
            Some(inst) => {
                let lo = inst.start.max(i.saturating_sub(n_nbr));
                let hi = inst.end.min(i + n_nbr);
                for j in lo..=hi {
                    let col = (n_nbr + j) - i; // n_nbr + (j - i), kept in usize
                    relatedness.set2(i, col, 1.0);
                }
                let start_offset = i - inst.start;
                if start_offset <= n_nbr {
                    starting.set2(i, start_offset, 1.0);
                } else {
                    starting.set2(i, none_col, 1.0);
                }
                let end_offset = inst.end - i;
                if end_offset <= n_nbr {
                    ending.set2(i, end_offset, 1.0);
                } else {
                    ending.set2(i, none_col, 1.0);
                }
            }
            None => {
                starting.set2(i, none_col, 1.0);
                ending.set2(i, none_col, 1.0);
            }
        }
    }

    Ok(LabelMaps {
        relatedness,
        starting,
        ending,
        valid_r,
        n_nbr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(start: usize, end: usize) -> GroundTruthInstance {
        GroundTruthInstance {
            start,
            end,
            class_id: 0,
        }
    }

    /// Independent per-cell evaluation of the map definitions.
    fn oracle_cell_r(
        instances: &[GroundTruthInstance],
        snippet_count: usize,
        n_nbr: usize,
        i: usize,
        col: usize,
    ) -> f32 {
        let offset = col as isize - n_nbr as isize;
        let j = i as isize + offset;
        if j < 0 || j >= snippet_count as isize {
            return 0.0;
        }
        match instances.iter().find(|inst| inst.contains(i)) {
            Some(inst) => {
                if inst.contains(j as usize) {
                    1.0
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    fn oracle_row_boundary(
        instances: &[GroundTruthInstance],
        n_nbr: usize,
        i: usize,
        is_start: bool,
    ) -> usize {
        match instances.iter().find(|inst| inst.contains(i)) {
            Some(inst) => {
                let offset = if is_start { i - inst.start } else { inst.end - i };
                if offset <= n_nbr {
                    offset
                } else {
                    n_nbr + 1
                }
            }
            None => n_nbr + 1,
        }
    }

    #[test]
    fn fig_style_example() {
        // instance [3,6], reference 5, window 4
        let maps = annotate_label_maps(&[inst(3, 6)], 10, 4).unwrap();
        let row: Vec<f32> = (0..9).map(|c| maps.relatedness.at2(5, c)).collect();
        assert_eq!(row, vec![0., 0., 1., 1., 1., 1., 0., 0., 0.]);
        assert_eq!(maps.starting.at2(5, 2), 1.0);
        assert_eq!(maps.starting.data()[5 * 6..6 * 6].iter().sum::<f32>(), 1.0);
        assert_eq!(maps.ending.at2(5, 1), 1.0);
    }

    #[test]
    fn background_row_is_none() {
        let maps = annotate_label_maps(&[inst(3, 6)], 10, 4).unwrap();
        let r0: f32 = (0..9).map(|c| maps.relatedness.at2(0, c)).sum();
        assert_eq!(r0, 0.0);
        assert_eq!(maps.starting.at2(0, 5), 1.0);
        assert_eq!(maps.ending.at2(0, 5), 1.0);
    }

    #[test]
    fn overlapping_instances_rejected() {
        let err = annotate_label_maps(&[inst(1, 5), inst(4, 8)], 12, 3).unwrap_err();
        assert!(err.to_string().contains("overlap"));
    }

    fn random_layout(rng: &mut ChaCha8Rng, snippet_count: usize, max_len: usize) -> Vec<GroundTruthInstance> {
        let mut instances = Vec::new();
        let mut pos = 0usize;
        while pos + 1 < snippet_count {
            let start = pos + rng.gen_range(1..4);
            if start >= snippet_count {
                break;
            }
            let len = rng.gen_range(1..=max_len.min(snippet_count - start));
            instances.push(GroundTruthInstance {
                start,
                end: start + len - 1,
                class_id: rng.gen_range(0..5),
            });
            pos = start + len;
        }
        instances
    }

    #[test]
    fn matches_per_cell_oracle_on_random_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let snippet_count = rng.gen_range(4..40);
            let n_nbr = rng.gen_range(1..10);
            let instances = random_layout(&mut rng, snippet_count, 2 * n_nbr + 3);
            let maps = annotate_label_maps(&instances, snippet_count, n_nbr).unwrap();
            for i in 0..snippet_count {
                for col in 0..2 * n_nbr + 1 {
                    let expect = oracle_cell_r(&instances, snippet_count, n_nbr, i, col);
                    assert_eq!(
                        maps.relatedness.at2(i, col),
                        expect,
                        "relatedness ({i},{col}), window {n_nbr}, layout {instances:?}"
                    );
                }
                let s_col = oracle_row_boundary(&instances, n_nbr, i, true);
                let e_col = oracle_row_boundary(&instances, n_nbr, i, false);
                for col in 0..n_nbr + 2 {
                    assert_eq!(maps.starting.at2(i, col), (col == s_col) as u8 as f32);
                    assert_eq!(maps.ending.at2(i, col), (col == e_col) as u8 as f32);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rows_are_exactly_one_hot(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let snippet_count = rng.gen_range(3..50);
            let n_nbr = rng.gen_range(1..12);
            let instances = random_layout(&mut rng, snippet_count, n_nbr + 1);
            let maps = annotate_label_maps(&instances, snippet_count, n_nbr).unwrap();
            for i in 0..snippet_count {
                let s: f32 = (0..n_nbr + 2).map(|c| maps.starting.at2(i, c)).sum();
                let e: f32 = (0..n_nbr + 2).map(|c| maps.ending.at2(i, c)).sum();
                prop_assert_eq!(s, 1.0);
                prop_assert_eq!(e, 1.0);
            }
        }

        #[test]
        fn in_instance_rows_have_one_contiguous_run_containing_center(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let snippet_count = rng.gen_range(3..50);
            let n_nbr = rng.gen_range(1..12);
            let instances = random_layout(&mut rng, snippet_count, n_nbr + 1);
            let maps = annotate_label_maps(&instances, snippet_count, n_nbr).unwrap();
            for i in 0..snippet_count {
                let row: Vec<bool> = (0..2 * n_nbr + 1)
                    .map(|c| maps.relatedness.at2(i, c) != 0.0)
                    .collect();
                let ones = row.iter().filter(|&&b| b).count();
                if ones == 0 {
                    continue;
                }
                let first = row.iter().position(|&b| b).unwrap();
                let last = row.iter().rposition(|&b| b).unwrap();
                prop_assert_eq!(last - first + 1, ones, "run must be contiguous");
                prop_assert!(row[n_nbr], "run must contain the center column");
            }
        }

        #[test]
        fn none_row_is_fully_background(seed in 0u64..300) {
            // instances no longer than the window: a "none" starting row
            // implies a "none" ending row and an all-zero relatedness row
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let snippet_count = rng.gen_range(3..50);
            let n_nbr = rng.gen_range(1..12);
            let instances = random_layout(&mut rng, snippet_count, n_nbr + 1);
            let maps = annotate_label_maps(&instances, snippet_count, n_nbr).unwrap();
            let none_col = maps.none_column();
            for i in 0..snippet_count {
                if maps.starting.at2(i, none_col) == 1.0 {
                    prop_assert_eq!(maps.ending.at2(i, none_col), 1.0);
                    let ones: f32 = (0..2 * n_nbr + 1).map(|c| maps.relatedness.at2(i, c)).sum();
                    prop_assert_eq!(ones, 0.0);
                }
            }
        }

        #[test]
        fn valid_r_masks_exactly_out_of_range_offsets(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let snippet_count = rng.gen_range(3..50);
            let n_nbr = rng.gen_range(1..12);
            let maps = annotate_label_maps(&[], snippet_count, n_nbr).unwrap();
            for i in 0..snippet_count {
                let masked: usize = (0..2 * n_nbr + 1)
                    .filter(|&c| maps.valid_r.at2(i, c) == 0.0)
                    .count();
                let expected = n_nbr.saturating_sub(i) + n_nbr.saturating_sub(snippet_count - 1 - i);
                prop_assert_eq!(masked, expected);
            }
        }
    }
}
