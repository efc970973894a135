//! Per-frame parallel helpers.
//!
//! Results are always gathered in frame order, so anything computed from
//! them sequentially is independent of the thread schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How per-frame contributions are summed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReductionMode {
    /// Sum in frame order; bit-reproducible for any thread count.
    #[default]
    Ordered,
    /// Tree reduction in whatever order the thread pool produces.
    Unordered,
}

pub fn map_frames<T, F>(q: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..q).into_par_iter().map(f).collect()
}

/// Like [`map_frames`], reporting the lowest-index failure.
pub fn try_map_frames<T, F>(q: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..q).into_par_iter().map(f).collect();
    results.into_iter().collect()
}
