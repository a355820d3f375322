//! Synthetic workloads for the criterion benches.

use msfs_core::seed::rng_from_seed;
use msfs_core::Dataset;
use ndarray::Array2;
use rand::Rng;

/// `n x p` uniform features with `m` labels, each a thresholded sum of a few
/// features, so label sets overlap the way real data does.
pub fn synthetic(seed: u64, n: usize, p: usize, m: usize) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let x = Array2::from_shape_simple_fn((n, p), || rng.random_range(-1.0..1.0));
    let labels = Array2::from_shape_fn((n, m), |(i, j)| {
        let s: f64 = (0..3).map(|k| x[[i, (j * 3 + k) % p]]).sum();
        u8::from(s > 0.2)
    });
    Dataset::from_arrays(x, labels).expect("consistent shapes")
}
