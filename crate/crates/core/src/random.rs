//! Seeded random sources. Every stochastic step in the crate draws from a
//! ChaCha8 stream keyed by an explicit `u64` seed, so results are
//! reproducible across runs and platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Mat;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard normal entries, filled column by column.
pub fn gaussian_mat(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
