//! Fan-out over independent jobs with results kept in index order.

use rayon::prelude::*;

/// Runs `job(0..n)` on up to `workers` threads; output order follows the index.
pub(crate) fn run_indexed<T, F>(workers: usize, n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(job).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&job).collect()),
        Err(_) => (0..n).map(job).collect(),
    }
}
