use rayon::prelude::*;
use stlcbf_core::controller::Executor;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "STLCBF_THREADS";

/// Runs rollouts on a rayon pool. Results come back in index order.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    pub fn new(threads: Option<usize>) -> Result<Self, rayon::ThreadPoolBuildError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        Ok(Self { pool: b.build()? })
    }

    /// Thread count from `STLCBF_THREADS`, or rayon's default when unset or unparsable.
    pub fn from_env() -> Result<Self, rayon::ThreadPoolBuildError> {
        let n = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
        Self::new(n)
    }
}

impl Executor for Parallel {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
