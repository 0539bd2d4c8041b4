//! Reproducible floating-point reductions.
//!
//! All sums in the toolkit go through [`pairwise_sum_by`] so that the result
//! depends only on the number of terms and their order, never on how work was
//! split across threads.

const LEAF: usize = 32;

/// Pairwise (cascade) sum of `term(i)` for `i` in `0..n`.
pub fn pairwise_sum_by<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64,
{
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        let len = hi - lo;
        if len <= LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + len / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    go(0, n, &term)
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), |i| values[i])
}

/// Balanced binary-tree sum, splitting at every level. For a power-of-two
/// count of equal terms this is exact.
pub fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            tree_sum(&values[..mid]) + tree_sum(&values[mid..])
        }
    }
}
