use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::StokesOperator;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed of one realization, a function of the base seed, the experiment
/// id and the realization index only.
pub fn sub_seed(base: u64, experiment_id: &str, realization: u64) -> u64 {
    splitmix64(splitmix64(base ^ fnv1a(experiment_id)) ^ realization)
}

/// Seed for the `attempt`-th redraw after a degenerate distortion.
pub fn resample_seed(seed: u64, attempt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(attempt.wrapping_add(0x5bd1_e995)))
}

/// Uniform `[-1, 1]` entries with the pressure made mean-zero.
pub fn random_initial_guess(op: &StokesOperator, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..op.n_total()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    op.project_mean_zero(&mut x[op.n_u()..]);
    x
}
