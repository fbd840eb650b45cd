//! Execution policy for the data-parallel loops.
//!
//! Every hot loop in the crate (PageRank sweeps, dump batches, language-model
//! shards, batch annotation, cross-validation) is written once against
//! [`Exec`]. Results are collected in input order, so both policies return
//! identical values; float reductions are done sequentially over the
//! collected partials to keep them bit-reproducible.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is on, otherwise sequential.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Writes `f(i)` into `out[i]` for every index.
    pub fn fill<R, F>(self, out: &mut [R], f: F)
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
            return;
        }
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }

    /// Applies `f` to fixed-size chunks and returns the per-chunk results in
    /// order. Chunk boundaries do not depend on the thread pool.
    pub fn map_chunks<T, R, F>(self, items: &[T], chunk: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> R + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_chunks(chunk).map(f).collect();
        }
        items.chunks(chunk).map(f).collect()
    }
}
