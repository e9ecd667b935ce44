//! Data-parallel helpers. With the `parallel` feature work is spread over
//! the rayon pool; without it everything runs on the calling thread. Results
//! always come back in input order, so both builds produce identical output.

/// Whether this build fans work out across threads.
pub const PARALLEL: bool = cfg!(feature = "parallel");

#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Maps over consecutive chunks, handing each a fresh per-chunk state.
pub fn map_chunks<T, S, R, I, F>(items: &[T], chunk: usize, init: I, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &[T]) -> R + Sync + Send,
{
    let chunks: Vec<&[T]> = items.chunks(chunk.max(1)).collect();
    map(&chunks, |c| f(&mut init(), c))
}

/// Sequential reference of [`map`], always on the calling thread.
pub fn map_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
