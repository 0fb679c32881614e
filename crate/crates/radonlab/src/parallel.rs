//! Data-parallel driving loops with a sequential fallback.
//!
//! Everything here is shape-deterministic: the parallel paths split work at
//! the same points as the sequential ones, so floating-point reductions are
//! bitwise identical with and without the `parallel` feature and for any
//! worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this length a pairwise sum just folds sequentially.
const PAIRWISE_LEAF: usize = 64;
/// Minimum length before a pairwise sum forks.
const PAIRWISE_PAR_MIN: usize = 1 << 15;

/// Fixed-shape pairwise (cascade) summation.
///
/// The split point depends only on the slice length, never on the thread
/// count, so the rounding path is reproducible. Error grows like
/// `O(log n · ε)` instead of `O(n · ε)` for left-to-right folds.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().sum();
    }
    let (lo, hi) = xs.split_at(xs.len() / 2);
    #[cfg(feature = "parallel")]
    {
        if xs.len() >= PAIRWISE_PAR_MIN {
            let (a, b) = rayon::join(|| pairwise_sum(lo), || pairwise_sum(hi));
            return a + b;
        }
    }
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// `(0..n).map(f)` collected in index order, parallel when enabled.
pub fn indexed_map<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Visit mutable chunks of `data` with their starting offsets.
pub fn for_each_chunk_mut<F>(data: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk, c));
    }
}
