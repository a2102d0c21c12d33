//! Order-preserving parallel map over replicate indices.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f(0..count)` on `threads` workers (0 = rayon's default) and returns
/// results in index order, so output never depends on the worker count.
pub fn par_map<T, F>(threads: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

/// Like `par_map` for fallible work; the first error in index order wins.
pub fn try_par_map<T, F>(threads: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    par_map(threads, count, f)?.into_iter().collect()
}
