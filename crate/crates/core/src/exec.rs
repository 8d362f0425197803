//! Data-parallel execution with a sequential fallback.
//!
//! The sweep and the benchmark are pure maps over an index range, so both
//! execution modes produce bit-identical output vectors; worker count and
//! scheduling never affect results. Rayon is compiled in behind the
//! `parallel` feature (default); without it every mode degrades to the
//! sequential loop.

/// How to execute an indexed map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Rayon worker pool; `None` sizes it to the available cores.
    Parallel { threads: Option<usize> },
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel { threads: None }
        } else {
            Parallelism::Sequential
        }
    }
}

impl Parallelism {
    /// Interpret a CLI-style worker count: 1 means sequential, 0 means all
    /// available cores.
    pub fn from_worker_count(workers: usize) -> Self {
        match workers {
            1 => Parallelism::Sequential,
            0 => Parallelism::Parallel { threads: None },
            n => Parallelism::Parallel { threads: Some(n) },
        }
    }
}

/// Map `f` over `0..n` preserving index order in the output.
pub fn map_indexed<T, F>(n: usize, parallelism: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    match parallelism {
        Parallelism::Sequential => (0..n).map(f).collect(),
        Parallelism::Parallel { threads } => parallel_map(n, threads, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect();
    match threads {
        None => run(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("worker pool")
            .install(run),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, _threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}
