//! Trajectory-parallel execution with worker-count independent results.
//!
//! Every sample is a pure function of its `RngStream`. Results are collected in
//! stream order and any reduction happens afterwards on one thread.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ensemble {
    pub master_seed: u64,
    /// Stream id of the first sample; separates ensembles sharing a seed.
    pub stream_base: u64,
    /// `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Ensemble {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed, stream_base: 0, workers: None }
    }

    pub fn with_base(self, stream_base: u64) -> Self {
        Self { stream_base, ..self }
    }

    pub fn with_workers(self, workers: Option<usize>) -> Self {
        Self { workers, ..self }
    }

    pub fn stream(&self, i: usize) -> RngStream {
        RngStream::new(self.master_seed, self.stream_base + i as u64)
    }

    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(RngStream) -> T + Sync + Send,
    {
        let run = || (0..n).into_par_iter().map(|i| f(self.stream(i))).collect::<Vec<T>>();
        match self.workers {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .expect("failed to build worker pool")
                .install(run),
            None => run(),
        }
    }

    /// Like `map`, but returns the error of the lowest failing index.
    pub fn try_map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(RngStream) -> Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}
