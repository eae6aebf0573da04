//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Parallelism::Parallel`] fans work out over
//! the rayon pool. Without it every call runs sequentially, so results never depend
//! on whether the feature is compiled in, only on the order-sensitivity of the caller.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    #[default]
    Sequential,
    Parallel,
}

impl Parallelism {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is always index order.
pub fn map_range<R, F>(n: usize, mode: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel. Output order matches input.
pub fn map_slice<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Fill each `chunk`-sized window of `out` with `f(chunk_index, window)`.
pub fn for_each_chunk_mut<T, F>(out: &mut [T], chunk: usize, mode: Parallelism, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk).enumerate().for_each(|(i, w)| f(i, w));
        return;
    }
    let _ = mode;
    out.chunks_mut(chunk).enumerate().for_each(|(i, w)| f(i, w));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_range(1000, Parallelism::Sequential, |i| i * i);
        let b = map_range(1000, Parallelism::Parallel, |i| i * i);
        assert_eq!(a, b);
        let xs: Vec<u64> = (0..500).collect();
        assert_eq!(
            map_slice(&xs, Parallelism::Sequential, |x| x + 1),
            map_slice(&xs, Parallelism::Parallel, |x| x + 1)
        );
        let mut s = vec![0usize; 97];
        let mut p = vec![0usize; 97];
        for_each_chunk_mut(&mut s, 10, Parallelism::Sequential, |c, w| w.iter_mut().for_each(|v| *v = c));
        for_each_chunk_mut(&mut p, 10, Parallelism::Parallel, |c, w| w.iter_mut().for_each(|v| *v = c));
        assert_eq!(s, p);
    }
}
