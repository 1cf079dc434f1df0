//! Execution strategy for the data-parallel loops (oracle enumeration,
//! rounding candidates, benchmark realizations).
//!
//! With the `parallel` feature the work is spread over the rayon pool;
//! without it every strategy runs on the calling thread. Results are
//! collected in index order either way, so output never depends on the
//! strategy.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this strategy will actually use more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Map `f` over `0..len`, returning results in index order.
pub fn map_indexed<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Fold `0..len` in chunks and reduce the per-chunk accumulators with `merge`.
/// `merge` must be associative; chunks are merged in index order.
pub fn fold_chunks<A, F, M>(exec: Execution, len: u64, chunk: u64, fold: F, merge: M) -> Option<A>
where
    A: Send,
    F: Fn(std::ops::Range<u64>) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = len.div_ceil(chunk) as usize;
    let parts = map_indexed(exec, n_chunks, |c| {
        let lo = c as u64 * chunk;
        fold(lo..(lo + chunk).min(len))
    });
    parts.into_iter().reduce(merge)
}
