//! Data-parallel execution over independent examples.
//!
//! Batch gradients, evaluation sums, and scoring loops are all maps over
//! examples followed by an order-fixed reduction. With the `parallel`
//! feature (default) the map runs on rayon over fixed contiguous chunks;
//! accumulators are merged in chunk order, so repeated runs on the same
//! build and thread count reduce in the same order. Without the feature
//! everything runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Which execution path to use for `map_accumulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Strategy {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Strategy::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Strategy::Sequential
    }
}

/// Fold `step` over every `(index, item)` into accumulators created by
/// `make`, merging partial accumulators left-to-right with `merge`.
pub fn map_accumulate<T, A, Make, Step, Merge>(
    strategy: Strategy,
    items: &[T],
    make: Make,
    step: Step,
    merge: Merge,
) -> A
where
    T: Sync,
    A: Send,
    Make: Fn() -> A + Sync,
    Step: Fn(&mut A, usize, &T) + Sync,
    Merge: Fn(&mut A, A),
{
    match strategy {
        Strategy::Sequential => {
            let mut acc = make();
            for (i, item) in items.iter().enumerate() {
                step(&mut acc, i, item);
            }
            acc
        }
        #[cfg(feature = "parallel")]
        Strategy::Parallel => {
            if items.is_empty() {
                return make();
            }
            let threads = rayon::current_num_threads().max(1);
            let chunk = items.len().div_ceil(threads);
            let parts: Vec<A> = items
                .par_chunks(chunk)
                .enumerate()
                .map(|(ci, slice)| {
                    let mut acc = make();
                    for (j, item) in slice.iter().enumerate() {
                        step(&mut acc, ci * chunk + j, item);
                    }
                    acc
                })
                .collect();
            let mut parts = parts.into_iter();
            let mut acc = parts.next().expect("at least one chunk");
            for p in parts {
                merge(&mut acc, p);
            }
            acc
        }
    }
}

/// Map every `(index, item)` to a value, preserving input order.
pub fn map_indexed<T, U, F>(strategy: Strategy, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    match strategy {
        Strategy::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        #[cfg(feature = "parallel")]
        Strategy::Parallel => items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}
