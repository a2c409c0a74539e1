//! Ordered map over trial indices, on a rayon pool when the `parallel`
//! feature is on and more than one job is requested.

use crate::error::Result;

/// Runs `f(0..n)` and returns the results in index order. The first error
/// by index wins, so the outcome does not depend on scheduling.
pub fn map_trials<T, F>(n: usize, jobs: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if jobs == Some(1) || n <= 1 {
        return (0..n).map(f).collect();
    }
    run(n, jobs, f)
}

#[cfg(feature = "parallel")]
fn run<T, F>(n: usize, jobs: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| crate::Error::InvalidArgument(format!("thread pool: {e}")))?;
    let out: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
    out.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
fn run<T, F>(n: usize, _jobs: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}
