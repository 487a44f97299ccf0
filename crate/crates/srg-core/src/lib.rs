//! Snippet-relatedness temporal action proposal pipeline.
//!
//! The pipeline runs in two stages over snippet-level feature sequences: a
//! generation network scores every snippet's neighborhood (relatedness,
//! starting, ending maps) from which candidate temporal intervals are
//! extracted, and an evaluation network scores and refines those intervals
//! into proposals. Post-processing applies an optional relatedness boost and
//! non-maximum suppression; recall-based metrics evaluate proposal quality.

pub mod data;
pub mod error;
pub mod eval;
pub mod intervals;
pub mod nets;
pub mod post;
pub mod seed;
pub mod tien;
pub mod tign;

pub use error::{CoreError, Result};
