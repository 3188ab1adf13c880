//! Data-parallel map with a sequential fallback.
//!
//! Every parallel entry point in the crate goes through [`map_indexed`], so
//! building without the `parallel` feature turns the whole engine sequential.
//! Results are collected in index order, which keeps outputs independent of
//! the worker count.

/// How index-parallel work is executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `workers == 0` uses the ambient rayon pool.
    Parallel { workers: usize },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { workers: 0 }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn with_workers(workers: usize) -> Self {
        if workers == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers }
        }
    }
}

pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel { workers } => parallel_map(n, workers, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect();
    if workers == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, _workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(100, Execution::Sequential, |i| i * i);
        for workers in [0, 2, 3] {
            assert_eq!(map_indexed(100, Execution::Parallel { workers }, |i| i * i), seq);
        }
    }
}
