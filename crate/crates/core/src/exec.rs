//! Chunked batch execution.
//!
//! Every batch operation in the crate is expressed over fixed-size chunks of
//! the input. The chunk grid depends only on `(len, chunk)` — never on the
//! thread count — and chunk results are combined sequentially in ascending
//! chunk order. Consequences:
//!
//! * the `parallel` build, the sequential build, and any rayon thread count
//!   all produce bit-identical floating-point results;
//! * [`ExecMode::Sequential`] exists at runtime even in parallel builds, so
//!   benchmarks can compare both paths in one binary.
//!
//! Without the `parallel` feature, [`ExecMode::Parallel`] silently runs the
//! sequential path (same chunk grid, same results).

use std::ops::Range;

/// Default samples per chunk. Small enough to load-balance a large batch,
/// large enough that per-chunk gradient buffers amortize.
pub const DEFAULT_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Single-threaded loop over chunks.
    Sequential,
    /// Rayon work-stealing over chunks (sequential without the feature).
    #[default]
    Parallel,
}

fn chunk_ranges(len: usize, chunk: usize) -> impl Iterator<Item = Range<usize>> {
    assert!(chunk > 0, "chunk size must be positive");
    let n = len.div_ceil(chunk);
    (0..n).map(move |i| i * chunk..((i + 1) * chunk).min(len))
}

/// Applies `f` to every chunk and collects the results in chunk order.
pub fn map_chunks<T, F>(mode: ExecMode, len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync,
{
    match mode {
        ExecMode::Sequential => chunk_ranges(len, chunk)
            .enumerate()
            .map(|(i, r)| f(i, r))
            .collect(),
        ExecMode::Parallel => parallel_map_chunks(len, chunk, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync,
{
    use rayon::prelude::*;
    let ranges: Vec<Range<usize>> = chunk_ranges(len, chunk).collect();
    ranges
        .into_par_iter()
        .enumerate()
        .map(|(i, r)| f(i, r))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync,
{
    chunk_ranges(len, chunk)
        .enumerate()
        .map(|(i, r)| f(i, r))
        .collect()
}

/// Splits `out` into chunks of `chunk * stride` elements (i.e. `chunk`
/// records of `stride` values each) and fills them in place. `f` receives the
/// record range and the output slice for that range.
pub fn fill_chunks<T, F>(mode: ExecMode, out: &mut [T], stride: usize, chunk: usize, f: F)
where
    T: Send,
    F: Fn(Range<usize>, &mut [T]) + Sync,
{
    assert!(stride > 0);
    assert_eq!(out.len() % stride, 0, "output not a multiple of stride");
    match mode {
        ExecMode::Sequential => {
            for (i, piece) in out.chunks_mut(chunk * stride).enumerate() {
                let start = i * chunk;
                f(start..start + piece.len() / stride, piece);
            }
        }
        ExecMode::Parallel => parallel_fill_chunks(out, stride, chunk, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_fill_chunks<T, F>(out: &mut [T], stride: usize, chunk: usize, f: F)
where
    T: Send,
    F: Fn(Range<usize>, &mut [T]) + Sync,
{
    use rayon::prelude::*;
    out.par_chunks_mut(chunk * stride)
        .enumerate()
        .for_each(|(i, piece)| {
            let start = i * chunk;
            f(start..start + piece.len() / stride, piece);
        });
}

#[cfg(not(feature = "parallel"))]
fn parallel_fill_chunks<T, F>(out: &mut [T], stride: usize, chunk: usize, f: F)
where
    T: Send,
    F: Fn(Range<usize>, &mut [T]) + Sync,
{
    for (i, piece) in out.chunks_mut(chunk * stride).enumerate() {
        let start = i * chunk;
        f(start..start + piece.len() / stride, piece);
    }
}

/// Sums per-chunk partial values in ascending chunk order. With f64 this is
/// the deterministic reduction used for losses and objectives.
pub fn reduce_in_order<T, A, F>(partials: Vec<T>, init: A, f: F) -> A
where
    F: FnMut(A, T) -> A,
{
    partials.into_iter().fold(init, f)
}

/// Installs a global rayon pool with `threads` workers. Call once at process
/// start; later calls are ignored (the pool can only be built once). Has no
/// effect on results, only on wall-clock.
pub fn set_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}
