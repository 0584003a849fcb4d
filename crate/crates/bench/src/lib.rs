//! Shared fixtures for the criterion benches.

use drddl::random::{gaussian_mat, seeded};
use drddl::Mat;

/// Dictionary with unit-norm atoms and a data matrix it explains exactly.
pub fn factorized(rows: usize, atoms: usize, samples: usize, seed: u64) -> (Mat, Mat) {
    let mut rng = seeded(seed);
    let d = drddl::layers::init_dictionary(rows, atoms, seed);
    let z = gaussian_mat(atoms, samples, &mut rng);
    let x = &d * z;
    (d, x)
}

/// One-hot labels cycling through `classes`.
pub fn cyclic_labels(samples: usize, classes: usize) -> Vec<usize> {
    (0..samples).map(|j| j % classes + 1).collect()
}
