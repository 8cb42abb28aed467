//! Execution helper for the data-parallel loops.
//!
//! Every heavy computation in this crate is a map over independent work
//! items (grid cells, frequencies, trajectory batches) followed by an
//! order-preserving collect, so parallel and sequential execution produce
//! bit-identical results. With the default `parallel` feature the map runs
//! on the rayon thread pool; without it, or when `sequential` is set, it
//! runs on the calling thread.

#[cfg(feature = "parallel")]
pub(crate) fn indexed_map<T, F>(n: usize, sequential: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if sequential {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn indexed_map<T, F>(n: usize, _sequential: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
