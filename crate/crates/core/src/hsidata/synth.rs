use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{HsiCube, LabelRaster};
use crate::error::{Error, Result};
use crate::{random, Mat};

/// Clean data, its corrupted copy and the positions of the sparse spikes.
#[derive(Clone, Debug)]
pub struct MixedNoise {
    pub clean: Mat,
    pub noisy: Mat,
    /// True where a spike was added.
    pub spike_mask: Vec<bool>,
}

/// `X = D* Z*` corrupted by Gaussian noise of std `sigma` plus spikes of
/// `+-spike_mag` on `round(spike_frac * entries)` uniformly chosen entries.
/// The mask is column-major, matching the matrix storage.
pub fn synth_mixed_noise(
    dict: &Mat,
    codes: &Mat,
    sigma: f64,
    spike_frac: f64,
    spike_mag: f64,
    seed: u64,
) -> Result<MixedNoise> {
    if dict.ncols() != codes.nrows() {
        return Err(Error::format(format!(
            "dictionary has {} atoms, codes have {} rows",
            dict.ncols(),
            codes.nrows()
        )));
    }
    if !(0.0..=1.0).contains(&spike_frac) || !(sigma >= 0.0) {
        return Err(Error::degenerate("spike_frac must be in [0, 1] and sigma >= 0"));
    }
    let clean = dict * codes;
    let mut rng = random::seeded(seed);
    let mut noisy = clean.clone();
    if sigma > 0.0 {
        let gauss = Normal::new(0.0, sigma).expect("sigma checked above");
        for v in noisy.iter_mut() {
            *v += gauss.sample(&mut rng);
        }
    }
    let total = noisy.len();
    let spikes = (spike_frac * total as f64).round() as usize;
    let mut spike_mask = vec![false; total];
    for i in index::sample(&mut rng, total, spikes.min(total)) {
        spike_mask[i] = true;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        noisy.as_mut_slice()[i] += sign * spike_mag;
    }
    Ok(MixedNoise {
        clean,
        noisy,
        spike_mask,
    })
}

/// A small labeled scene for demos and tests: `classes` vertical stripes,
/// each with its own smooth mean spectrum, Gaussian noise and a sprinkle of
/// impulse noise. Pixels with `(row + col) % 7 == 0` are left unlabeled.
pub fn synth_scene(
    rows: usize,
    cols: usize,
    bands: usize,
    classes: usize,
    seed: u64,
) -> Result<(HsiCube, LabelRaster)> {
    if classes == 0 || classes > cols {
        return Err(Error::degenerate(format!(
            "{classes} classes do not fit in {cols} columns"
        )));
    }
    let mut rng = random::seeded(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let freq = rng.random_range(0.05..0.4);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let level = rng.random_range(0.3..0.7);
            (0..bands)
                .map(|b| level + 0.25 * (freq * b as f64 + phase).sin())
                .collect()
        })
        .collect();
    let gauss = Normal::new(0.0, 0.02).unwrap();

    let mut labels = vec![0u32; rows * cols];
    let mut values = vec![0.0; rows * cols * bands];
    for r in 0..rows {
        for c in 0..cols {
            let class = c * classes / cols;
            if (r + c) % 7 != 0 {
                labels[r * cols + c] = class as u32 + 1;
            }
            for b in 0..bands {
                let mut v = means[class][b] + gauss.sample(&mut rng);
                if rng.random_bool(0.005) {
                    v += if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                }
                values[b * rows * cols + r * cols + c] = v;
            }
        }
    }
    Ok((
        HsiCube::new(rows, cols, bands, values)?,
        LabelRaster::new(rows, cols, labels)?,
    ))
}
