use alloc::vec::Vec;

/// `n_s` equispaced points covering `[a, b]`, endpoints included.
pub fn equispaced_grid(a: f64, b: f64, n_s: usize) -> Vec<f64> {
    assert!(n_s >= 2, "grid needs at least two points");
    let step = (b - a) / (n_s - 1) as f64;
    (0..n_s)
        .map(|s| if s + 1 == n_s { b } else { a + step * s as f64 })
        .collect()
}

/// Mean squared gap between `estimate` and `truth` over an equispaced grid of `[a, b]`.
pub fn error_metric(
    mut estimate: impl FnMut(f64) -> f64,
    truth: impl Fn(f64) -> f64,
    range: (f64, f64),
    n_s: usize,
) -> f64 {
    let grid = equispaced_grid(range.0, range.1, n_s);
    grid.iter()
        .map(|&y| {
            let e = estimate(y) - truth(y);
            e * e
        })
        .sum::<f64>()
        / n_s as f64
}
