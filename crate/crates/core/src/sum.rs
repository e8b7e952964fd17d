//! Fixed-order pairwise (tree) summation.
//!
//! Every sample reduction in this crate goes through these helpers so that
//! results are bit-reproducible regardless of how the surrounding work is
//! scheduled. The split point depends only on the slice length, never on
//! thread count or chunking.

/// Threshold below which a straight left-to-right sum is used.
const LEAF: usize = 16;

/// Sums a slice with fixed-order pairwise recursion.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Arithmetic mean via [`pairwise_sum`]. Returns 0 for an empty slice.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}
