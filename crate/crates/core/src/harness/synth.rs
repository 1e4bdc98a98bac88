use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SitePlacement {
    #[default]
    Equispaced,
    /// Uniform draws on `[-1, 1]`, taken from the same stream before the noise.
    Random,
}

/// `y_i = x_i^2 + N(0, sigma^2)` at equispaced sites on `[-1, 1]`.
pub fn synth_quadratic(n: usize, sigma: f64, seed: u64) -> ObservationSet {
    synth_quadratic_with(n, sigma, seed, SitePlacement::Equispaced)
}

pub fn synth_quadratic_with(
    n: usize,
    sigma: f64,
    seed: u64,
    placement: SitePlacement,
) -> ObservationSet {
    assert!(n >= 2, "need at least two sites");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites: Vec<f64> = match placement {
        SitePlacement::Equispaced => (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect(),
        SitePlacement::Random => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
    };
    let values = sites
        .iter()
        .map(|x| {
            let noise: f64 = rng.sample(StandardNormal);
            x * x + sigma * noise
        })
        .collect();
    ObservationSet::from_flat(1, sites, values).expect("synthetic sites are distinct")
}
