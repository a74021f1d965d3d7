//! Data-parallel execution of independent trials.
//!
//! Shots, rounds and sweep replications are independent: each one owns a
//! random stream derived from `(seed, index)`, so the sequential and the
//! rayon paths produce identical results. Without the `parallel` feature
//! [`Execution::Parallel`] falls back to the sequential path.

/// How a batch of independent trials is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Maps `f` over `0..count`, returning results in index order.
pub fn map_indexed<T, F>(count: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Maps `f` over the items of `items`, returning results in input order.
pub fn map_slice<I, T, F>(items: &[I], exec: Execution, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Splits `0..total` into contiguous chunks of at most `chunk` items and
/// folds each with `f`; chunk results come back in order.
pub fn map_chunks<T, F>(total: usize, chunk: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = total.div_ceil(chunk);
    map_indexed(n_chunks, exec, |i| {
        let start = i * chunk;
        f(start..(start + chunk).min(total))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let seq = map_indexed(100, Execution::Sequential, |i| i * i);
        let par = map_indexed(100, Execution::Parallel, |i| i * i);
        assert_eq!(seq, par);
        let chunks = map_chunks(10, 3, Execution::Parallel, |r| r.len());
        assert_eq!(chunks, [3, 3, 3, 1]);
        assert!(map_chunks(0, 3, Execution::Sequential, |r| r.len()).is_empty());
    }
}
