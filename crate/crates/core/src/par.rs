//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the work is spread over the current rayon
//! pool; without it the same closures run in index order. Every reduction is
//! keyed so the result does not depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, preserving index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Maps every index with a per-worker scratch value and keeps the smallest
/// result under `better`, which must be a strict total order (include an
/// index tie-break) for the outcome to be schedule independent.
pub fn min_indexed_with<S, T, I, F, B>(n: usize, init: I, f: F, better: B) -> Option<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> Option<T> + Sync + Send,
    B: Fn(&T, &T) -> bool + Sync + Send,
{
    let pick = |a: Option<T>, b: Option<T>| match (a, b) {
        (Some(a), Some(b)) => Some(if better(&b, &a) { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    };
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map_init(&init, |s, i| f(s, i)).reduce(|| None, pick)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut s = init();
        (0..n).map(|i| f(&mut s, i)).fold(None, pick)
    }
}

/// Maps every index with a per-worker scratch value and folds the results
/// with `combine`, which must be associative. Results are combined in index
/// order, so an order-sensitive but associative `combine` is deterministic.
pub fn map_reduce_with<S, T, I, F, Z, C>(n: usize, init: I, f: F, identity: Z, combine: C) -> T
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
    Z: Fn() -> T + Sync + Send,
    C: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map_init(&init, |s, i| f(s, i)).reduce(&identity, &combine)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut s = init();
        (0..n).map(|i| f(&mut s, i)).fold(identity(), combine)
    }
}

/// Number of worker threads the helpers above will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
