//! Data-parallel helpers. With the `parallel` feature these run on the rayon
//! global pool; without it they are plain sequential loops with identical
//! results and ordering.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
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

/// Maps `f` over `start..end`, preserving order.
pub fn map_range<R, F>(start: u64, end: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (start..end).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (start..end).map(f).collect()
    }
}

/// First `Some` produced by `f` over `start..end` in address order, if any.
pub fn find_first<R, F>(start: u64, end: u64, f: F) -> Option<R>
where
    R: Send,
    F: Fn(u64) -> Option<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (start..end).into_par_iter().find_map_first(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (start..end).find_map(f)
    }
}

/// True if the `parallel` feature is compiled in.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
