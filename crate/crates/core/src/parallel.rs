//! Deterministic parallel reduction helpers.
//!
//! Items are split into fixed-size chunks, chunks are processed in parallel,
//! and the per-chunk accumulators are merged sequentially in chunk order.
//! The floating-point summation order is therefore independent of the number
//! of worker threads.

use rayon::prelude::*;

pub const CHUNK: usize = 64;

/// Fold `items` into an accumulator with a thread-count-independent result.
pub fn chunked_fold<T, A, I, F, M>(items: &[T], init: I, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &T) + Sync,
    M: Fn(&mut A, A),
{
    chunked_fold_with(items, CHUNK, init, fold, merge)
}

/// Like [`chunked_fold`] with an explicit chunk size, for folds whose
/// accumulators are large.
pub fn chunked_fold_with<T, A, I, F, M>(items: &[T], chunk: usize, init: I, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &T) + Sync,
    M: Fn(&mut A, A),
{
    let partials: Vec<A> = items
        .par_chunks(chunk.max(1))
        .map(|chunk| {
            let mut acc = init();
            for item in chunk {
                fold(&mut acc, item);
            }
            acc
        })
        .collect();
    let mut out = init();
    for p in partials {
        merge(&mut out, p);
    }
    out
}

/// Parallel map preserving input order.
pub fn ordered_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}
