//! Data-parallel map over replication indices.
//!
//! With the `parallel` feature (default) [`Schedule::Parallel`] runs on the
//! current rayon pool; without it both schedules run sequentially. Results are
//! always returned in index order, so any reduction over them is independent
//! of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Schedule {
    Sequential,
    #[default]
    Parallel,
}

pub fn map_indexed<T, F>(n: usize, schedule: Schedule, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match schedule {
        #[cfg(feature = "parallel")]
        Schedule::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = one per core).
/// Without the `parallel` feature this just calls `f`.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    let threads = if threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        threads
    };
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(1000, Schedule::Sequential, |i| i * i);
        let par = with_threads(4, || map_indexed(1000, Schedule::Parallel, |i| i * i));
        assert_eq!(seq, par);
    }
}
