//! Replication scheduling. Work is cut into fixed-size blocks so that the
//! partition, and therefore every reduction, is independent of the number of
//! worker threads.

use std::ops::Range;

use rayon::prelude::*;

/// Replications per block.
pub(crate) const BLOCK: u64 = 64;

/// Applies `f` to consecutive blocks of `0..count` in parallel and returns
/// the results in block order.
pub(crate) fn map_blocks<R, F>(count: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<u64>) -> R + Sync + Send,
{
    let blocks = count.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| f(b * BLOCK..((b + 1) * BLOCK).min(count)))
        .collect()
}

/// Applies `f` to every index in parallel, preserving index order.
pub(crate) fn map_indexed<R, F>(count: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}
