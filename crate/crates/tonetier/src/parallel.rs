//! Data-parallel batch helpers with a sequential fallback.
//!
//! Every batch loop in the crate goes through [`map`] so the `parallel`
//! feature is the single switch between rayon and plain iteration. Outputs
//! are collected in input order, so callers that fold the result afterwards
//! get the same floating-point reduction order no matter how many worker
//! threads ran the map.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is on.
///
/// The output vector is indexed like the input regardless of scheduling.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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

/// Sequential variant of [`map`], always single-threaded.
///
/// Exists so benchmarks can compare both execution modes in one build.
pub fn map_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
