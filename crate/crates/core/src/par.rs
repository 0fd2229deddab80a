//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the loops run on the current rayon pool;
//! without it they run in order on the calling thread. Every helper keeps
//! per-item work independent and returns partial results in index order, so
//! outputs are bitwise identical whatever the thread count.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(row_index, row)` for each `row_len`-sized chunk of `data`.
pub(crate) fn for_each_row<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(y, row)| f(y, row));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(row_len)
        .enumerate()
        .for_each(|(y, row)| f(y, row));
}

/// Splits `0..len` into fixed blocks of `block` items and maps each block.
///
/// The block boundaries depend only on `len` and `block`, never on the
/// number of threads, which is what makes block-then-fold reductions
/// reproducible.
pub(crate) fn map_blocks<R, F>(len: usize, block: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Send + Sync,
{
    let block = block.max(1);
    let count = len.div_ceil(block);
    let range_of = |i: usize| i * block..((i + 1) * block).min(len);
    #[cfg(feature = "parallel")]
    {
        (0..count).into_par_iter().map(|i| f(range_of(i))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(|i| f(range_of(i))).collect()
    }
}

/// Maps every index in `0..len`, preserving order.
pub(crate) fn map_indices<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}
