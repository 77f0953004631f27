//! Execution mode for record scans. With the `parallel` feature disabled
//! every mode runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Order-preserving `filter_map` over a slice.
pub fn filter_map<'a, T, U, F>(items: &'a [T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> Option<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().filter_map(f).collect();
    }
    let _ = exec;
    items.iter().filter_map(f).collect()
}

/// Folds fixed-size chunks with `map` and combines the partial results with
/// `reduce`. Chunk boundaries do not depend on the thread count, so an
/// associative `reduce` gives the same answer in both modes.
pub fn map_reduce_chunks<'a, T, A, M, R>(items: &'a [T], exec: Execution, chunk: usize, map: M, reduce: R) -> Option<A>
where
    T: Sync,
    A: Send,
    M: Fn(&'a [T]) -> A + Sync + Send,
    R: Fn(A, A) -> A + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_chunks(chunk).map(map).reduce_with(reduce);
    }
    let _ = exec;
    items.chunks(chunk).map(map).reduce(reduce)
}

/// Neumaier-compensated sum in slice order, so results do not depend on how
/// the values were gathered.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Population mean and standard deviation; `None` for an empty slice.
pub fn population_moments(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|x| (x - mean) * (x - mean))) / n;
    Some((mean, var.max(0.0).sqrt()))
}
