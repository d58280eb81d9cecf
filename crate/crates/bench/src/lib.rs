//! Shared inputs for the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `n * d` standard normal draws from a fixed seed.
pub fn gaussian_cloud(n_times_d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_times_d).map(|_| rng.sample(StandardNormal)).collect()
}
