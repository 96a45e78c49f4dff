//! Data-parallel helpers.
//!
//! With the `parallel` feature these fan out over rayon; without it they run
//! the same closures sequentially. Every helper writes disjoint output slots,
//! so results are identical in both modes and for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Work (in multiply-adds) below which splitting is not worth it.
pub const MIN_PARALLEL_WORK: usize = 1 << 15;

/// Calls `f(index, chunk)` for each `chunk_len`-sized chunk of `out`.
pub fn for_each_chunk<T, F>(out: &mut [T], chunk_len: usize, work_per_chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if chunk_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        let n_chunks = out.len() / chunk_len;
        if n_chunks > 1 && n_chunks.saturating_mul(work_per_chunk) >= MIN_PARALLEL_WORK {
            let min_len = (MIN_PARALLEL_WORK / work_per_chunk.max(1)).max(1);
            out.par_chunks_mut(chunk_len)
                .enumerate()
                .with_min_len(min_len)
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    let _ = work_per_chunk;
    out.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Number of worker threads the helpers will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
