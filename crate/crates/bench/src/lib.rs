//! Deterministic inputs shared by the benchmarks.

use mrsvdd::linalg::{Matrix, Vector};
use mrsvdd::timeseries::{normalise_series, synthetic_benchmark, window};
use mrsvdd::Path;

/// `count` evenly spaced normalised windows of a synthetic series.
pub fn windows(count: usize, len: usize, dim: usize) -> Vec<Path> {
    let series =
        synthetic_benchmark(11, 2000.max(len * 2), dim, &[]).expect("valid synthetic parameters");
    let (series, _) = normalise_series(&series);
    let all = window(&series, len, 1).expect("series longer than a window");
    all.thin(count).windows().to_vec()
}

/// A well-conditioned symmetric positive definite matrix and alternating labels.
pub fn dual_instance(n: usize) -> (Matrix, Vector) {
    let q = Matrix::from_fn(n, n, |i, j| (-((i as f64 - j as f64).powi(2)) / 50.0).exp())
        + Matrix::identity(n, n) * 1e-2;
    let y = Vector::from_fn(n, |j, _| if j % 5 == 0 { -1.0 } else { 1.0 });
    (q, y)
}
