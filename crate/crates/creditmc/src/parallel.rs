//! Data-parallel driver used by every estimator.
//!
//! All fan-out in this crate is "map an index range through a pure closure and
//! collect in index order". Results are therefore bit-identical whether the
//! `parallel` feature (rayon) is enabled or not, and for any thread count,
//! because randomness is keyed by index, never by execution order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `0..n` through `f`, in parallel when the `parallel` feature is on.
/// Output order always matches index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant with the same contract. Exists so benchmarks can
/// compare the two drivers over identical closures.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
