//! Thin execution shim: rayon when the `parallel` feature is enabled, plain
//! iterators otherwise. Callers pick the path at runtime through [`Exec`];
//! without the feature every request degrades to sequential.

use serde::{Deserialize, Serialize};

/// Execution policy for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this policy actually runs on the thread pool in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Map `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_with(Exec::Parallel, items, f)
}

/// Map `f` over `items` under an explicit policy, preserving order.
pub fn map_with<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Apply `f` to each element of `items` mutably.
pub fn for_each_mut<T, F>(exec: Exec, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
        return;
    }
    let _ = exec;
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Visit the rows of a row-major `data` block (rows of `row_len`) together
/// with one output slot per row.
pub fn rows_mut<F>(exec: Exec, data: &mut [f64], row_len: usize, out: &mut [f64], f: F)
where
    F: Fn(usize, &mut [f64], &mut f64) + Sync + Send,
{
    debug_assert_eq!(data.len(), row_len * out.len());
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(row_len)
            .zip(out.par_iter_mut())
            .enumerate()
            .for_each(|(i, (row, o))| f(i, row, o));
        return;
    }
    let _ = exec;
    for (i, (row, o)) in data.chunks_mut(row_len).zip(out.iter_mut()).enumerate() {
        f(i, row, o);
    }
}

/// Sum of `width`-long partial vectors produced over `0..len` in chunks of
/// `chunk`. Chunk boundaries and the merge order are fixed, so both
/// policies give bit-identical results.
pub fn chunked_sum<F>(exec: Exec, len: usize, chunk: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync + Send,
{
    let chunk = chunk.max(1);
    let ranges: Vec<std::ops::Range<usize>> = (0..len).step_by(chunk).map(|a| a..(a + chunk).min(len)).collect();
    let partials = map_with(exec, &ranges, |r| {
        let mut acc = vec![0.0; width];
        f(r.clone(), &mut acc);
        acc
    });
    let mut total = vec![0.0; width];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_with(Exec::Sequential, &xs, |x| x * x);
        let b = map_with(Exec::Parallel, &xs, |x| x * x);
        assert_eq!(a, b);
    }

    #[test]
    fn for_each_sees_indices() {
        let mut v = vec![0usize; 64];
        for_each_mut(Exec::Parallel, &mut v, |i, x| *x = 2 * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn chunked_sum_is_policy_independent() {
        let xs: Vec<f64> = (0..10_001).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = |r: std::ops::Range<usize>, acc: &mut [f64]| {
            for i in r {
                acc[0] += xs[i];
                acc[1] += xs[i] * xs[i];
            }
        };
        let a = chunked_sum(Exec::Sequential, xs.len(), 256, 2, f);
        let b = chunked_sum(Exec::Parallel, xs.len(), 256, 2, f);
        assert_eq!(a, b);
    }
}
