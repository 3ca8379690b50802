//! Fixed-order reductions.
//!
//! All sums over neurons and over data samples go through the routines in
//! this module. The shape of every reduction tree depends only on the
//! number of terms, never on the thread count, so results are bitwise
//! reproducible in [`Reduction::Tree`] mode regardless of parallelism.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Leaf size for neuron-index reductions.
const NEURON_LEAF: usize = 32;
/// Leaf size for sample-index reductions.
pub const SAMPLE_LEAF: usize = 8;

/// How sample-level reductions are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Fixed pairwise tree, leaves evaluated in parallel via `rayon::join`.
    #[default]
    Tree,
    /// Work-stealing reduction whose association order may vary between runs.
    Unordered,
}

/// Pairwise dot product with four-lane leaves.
pub fn pairwise_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= NEURON_LEAF {
        return lane_dot(a, b);
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// Pairwise sum with four-lane leaves.
pub fn pairwise_sum<T: Scalar>(a: &[T]) -> T {
    if a.len() <= NEURON_LEAF {
        let mut acc = [T::zero(); 4];
        let chunks = a.chunks_exact(4);
        let rem = chunks.remainder();
        for c in chunks {
            for k in 0..4 {
                acc[k] += c[k];
            }
        }
        let mut tail = T::zero();
        for &v in rem {
            tail += v;
        }
        return (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
    }
    let mid = a.len() / 2;
    pairwise_sum(&a[..mid]) + pairwise_sum(&a[mid..])
}

#[inline]
fn lane_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Scratch length needed by [`tree_rows`] for `rows` terms of width `width`.
pub fn tree_rows_scratch(rows: usize, width: usize) -> usize {
    let mut depth = 0;
    let mut n = rows;
    while n > NEURON_LEAF {
        n = n.div_ceil(2);
        depth += 1;
    }
    depth * width
}

/// Computes `out = Σ_{r < rows} row_r` where `add_row(r, acc)` adds the
/// r-th vector term into `acc`. Leaves of up to 32 rows are accumulated
/// sequentially; leaves are combined pairwise.
pub fn tree_rows<T: Scalar>(
    rows: usize,
    out: &mut [T],
    scratch: &mut [T],
    add_row: &impl Fn(usize, &mut [T]),
) {
    tree_rows_range(0, rows, out, scratch, add_row);
}

fn tree_rows_range<T: Scalar>(
    lo: usize,
    hi: usize,
    out: &mut [T],
    scratch: &mut [T],
    add_row: &impl Fn(usize, &mut [T]),
) {
    if hi - lo <= NEURON_LEAF {
        out.fill(T::zero());
        for r in lo..hi {
            add_row(r, out);
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    tree_rows_range(lo, mid, out, scratch, add_row);
    let (tmp, rest) = scratch.split_at_mut(out.len());
    tree_rows_range(mid, hi, tmp, rest, add_row);
    for (o, t) in out.iter_mut().zip(tmp.iter()) {
        *o += *t;
    }
}

/// Reduces `0..n` into an accumulator of type `A`.
///
/// `leaf` handles a contiguous index range of at most [`SAMPLE_LEAF`]
/// items sequentially, `combine(left, right)` merges two partial results.
/// In [`Reduction::Tree`] mode the tree is fixed by `n` alone.
pub fn tree_reduce<A, L, C>(n: usize, mode: Reduction, leaf: &L, combine: &C) -> A
where
    A: Send,
    L: Fn(Range<usize>) -> A + Sync,
    C: Fn(A, A) -> A + Sync,
{
    match mode {
        Reduction::Tree => tree_reduce_range(0, n, leaf, combine),
        Reduction::Unordered => {
            let chunks: Vec<Range<usize>> = (0..n.div_ceil(SAMPLE_LEAF).max(1))
                .map(|c| c * SAMPLE_LEAF..((c + 1) * SAMPLE_LEAF).min(n))
                .collect();
            chunks
                .into_par_iter()
                .map(leaf)
                .reduce_with(combine)
                .expect("at least one chunk")
        }
    }
}

fn tree_reduce_range<A, L, C>(lo: usize, hi: usize, leaf: &L, combine: &C) -> A
where
    A: Send,
    L: Fn(Range<usize>) -> A + Sync,
    C: Fn(A, A) -> A + Sync,
{
    if hi - lo <= SAMPLE_LEAF {
        return leaf(lo..hi);
    }
    let mid = lo + (hi - lo) / 2;
    let (a, b) = rayon::join(
        || tree_reduce_range(lo, mid, leaf, combine),
        || tree_reduce_range(mid, hi, leaf, combine),
    );
    combine(a, b)
}
