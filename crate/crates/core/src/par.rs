//! Order-preserving map over independent jobs. Uses rayon with the `std`
//! feature; the output order (and therefore every downstream reduction) is
//! the input order either way.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub(crate) fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}
