//! Optional worker parallelism with order-preserving results.

use rayon::prelude::*;

/// Environment variable that caps worker threads. Unset means sequential.
pub const THREADS_ENV: &str = "HEMORISK_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exec {
    threads: usize,
}

impl Default for Exec {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Exec {
    pub fn sequential() -> Self {
        Self { threads: 1 }
    }

    pub fn with_threads(threads: usize) -> Self {
        Self {
            threads: threads.max(1),
        }
    }

    /// Reads [`THREADS_ENV`]; absent or unparseable values mean sequential.
    pub fn from_env() -> Self {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .map(Self::with_threads)
            .unwrap_or_else(Self::sequential)
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Applies `f` to every item and returns results in input order.
    pub fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        if self.threads <= 1 || items.len() <= 1 {
            return items.into_iter().map(f).collect();
        }
        match rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
        {
            Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
            Err(err) => {
                log::warn!("thread pool unavailable ({err}); running sequentially");
                items.into_iter().map(f).collect()
            }
        }
    }
}
