//! Data-parallel helpers with a sequential fallback.
//!
//! Everything here is deterministic regardless of thread count:
//! - maps produce output in input order (rayon's indexed collect preserves order),
//! - floating-point reductions always go through [`tree_sum`], a fixed-shape
//!   pairwise reduction whose association order depends only on the input length.
//!
//! With the `parallel` feature disabled, the same entry points run on plain
//! iterators, so builds without rayon produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Map `f` over a slice, collecting results in input order.
pub(crate) fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Pairwise tree sum with a fixed association order.
///
/// Splitting depends only on slice length, never on scheduling, so the result
/// is identical across runs and thread counts (and to the sequential build).
pub(crate) fn tree_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
}
