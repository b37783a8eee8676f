//! Deterministic floating-point reductions.
//!
//! Sums are evaluated over a fixed binary tree determined solely by the input
//! length, so results are bit-identical from run to run and independent of
//! thread count.

/// Below this length the sum is evaluated sequentially; the recursion only
/// shapes the upper levels of the reduction tree.
const PAIRWISE_LEAF: usize = 32;

/// Sums `xs` over a fixed binary reduction tree.
///
/// The tree shape depends only on `xs.len()`, making the result reproducible
/// bit-for-bit for a given input ordering. Pairwise reduction also bounds the
/// rounding error growth at `O(log n)` instead of `O(n)`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean over a fixed reduction tree; `0.0` for an empty slice.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}
