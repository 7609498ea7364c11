//! Deterministic parallel evaluation.
//!
//! Results always come back in index order, so any reduction over them is
//! independent of the worker count.

/// Evaluate `f(0), …, f(n-1)` on `workers` threads.
pub fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    if workers > 1 && n > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let serial = parallel_map(1000, 1, |i| i * i);
        let threaded = parallel_map(1000, 4, |i| i * i);
        assert_eq!(serial, threaded);
    }
}
