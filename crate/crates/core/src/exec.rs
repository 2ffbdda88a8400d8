//! Execution strategy: data-parallel maps with a sequential fallback.
//!
//! With the `parallel` feature (default) the mapping functions fan work out
//! across a rayon thread pool; without it they run in order on the calling
//! thread. Results are always collected in input order and every work item
//! owns its RNG state, so outputs are identical either way — the feature
//! only changes wall-clock time, never results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over mutable items, collecting results in input order.
pub fn map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seq_map_mut(items, f)
    }
}

/// Sequential reference implementation of [`map_mut`]; always available so
/// benches can compare the two strategies directly.
pub fn seq_map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    F: Fn(usize, &mut T) -> R,
{
    items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map over an index range, collecting results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Sequential reference implementation of [`map_range`].
pub fn seq_map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Fold chunk results in chunk order: map each chunk of `items` to a value
/// and combine values left-to-right. Combination order is fixed regardless
/// of execution strategy, preserving bit-exact floating-point results.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        items.par_chunks(chunk).map(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.chunks(chunk).map(f).collect()
    }
}

/// True when this build fans work out across threads.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
