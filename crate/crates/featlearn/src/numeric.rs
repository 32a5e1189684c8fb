//! Small numeric helpers shared across modules.
//!
//! The reduction helpers here are what make results bit-identical across
//! thread counts: batches are split at a fixed chunk size regardless of how
//! many workers exist, chunk partials are computed independently, and the
//! partials are folded in a fixed binary-tree order.

/// Fixed reduction chunk (in samples). Independent of thread count.
pub const REDUCE_CHUNK: usize = 2048;

/// Pairwise (cascade) summation over a slice.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Fold chunk partials in a fixed binary-tree order (adjacent pairs per
/// level). Returns `None` for an empty input.
pub fn tree_combine<T>(parts: Vec<T>, combine: impl Fn(T, T) -> T) -> Option<T> {
    let mut level = parts;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.into_iter().next()
}

/// Chunk boundaries [start, end) covering 0..n at `REDUCE_CHUNK` granularity.
pub fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n.div_ceil(REDUCE_CHUNK));
    let mut start = 0;
    while start < n {
        let end = usize::min(start + REDUCE_CHUNK, n);
        out.push((start, end));
        start = end;
    }
    out
}

/// Cosine of the angle between two vectors; 0 when either has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_inputs() {
        let v: Vec<f64> = (1..=17).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 153.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn tree_combine_order_is_fixed() {
        // strings expose the combine order directly
        let parts: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let got = tree_combine(parts, |x, y| format!("({x}{y})")).unwrap();
        assert_eq!(got, "(((ab)(cd))e)");
    }

    #[test]
    fn chunk_ranges_cover_exactly() {
        let ranges = chunk_ranges(2 * REDUCE_CHUNK + 5);
        assert_eq!(ranges.len(), 3);
        assert_eq!(ranges[0], (0, REDUCE_CHUNK));
        assert_eq!(ranges[2], (2 * REDUCE_CHUNK, 2 * REDUCE_CHUNK + 5));
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((cosine(&[1.0, 0.0], &[0.0, 2.0])).abs() < 1e-15);
    }
}
