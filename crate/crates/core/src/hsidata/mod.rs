//! Hyperspectral scenes: ENVI cube and label raster I/O, the train/test
//! split protocol, spectral and patch+PCA features, and synthetic data with
//! mixed Gaussian and sparse noise.

mod envi;
mod features;
mod labels;
mod split;
mod synth;

pub use envi::{read_envi, write_envi, EnviHeader};
pub use features::{extract_patch_features, extract_spectral_pixels, pca_fit, PatchFeatures, Pca};
pub use labels::{read_labels, write_labels_csv};
pub use split::{
    make_split, read_split_csv, split_fraction, split_preset, write_split_csv, Split, SplitPreset,
    INDIAN_PINES_TRAIN_COUNTS, PAVIA_TRAIN_COUNTS,
};
pub use synth::{synth_mixed_noise, synth_scene, MixedNoise};

use crate::error::{Error, Result};

/// `(row, col)` pixel coordinate.
pub type Pixel = (usize, usize);

/// A `rows x cols x bands` cube stored band-sequentially:
/// `values[b * rows * cols + r * cols + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub values: Vec<f64>,
}

impl HsiCube {
    pub fn new(rows: usize, cols: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::format("cube dimensions must be positive"));
        }
        if values.len() != rows * cols * bands {
            return Err(Error::format(format!(
                "cube of {rows}x{cols}x{bands} needs {} values, got {}",
                rows * cols * bands,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("cube has non-finite values"));
        }
        Ok(HsiCube {
            rows,
            cols,
            bands,
            values,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.values[band * self.rows * self.cols + row * self.cols + col]
    }

    pub fn pixel(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.get(row, col, b)).collect()
    }
}

/// Per-pixel class ids: 0 is unlabeled, `1..=C` are classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
}

impl LabelRaster {
    pub fn new(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::format(format!(
                "label raster of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                labels.len()
            )));
        }
        Ok(LabelRaster { rows, cols, labels })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.cols + col]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Labeled pixels of each class in raster order; index 0 holds class 1.
    pub fn class_pixels(&self) -> Vec<Vec<Pixel>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let l = self.get(r, c) as usize;
                if l > 0 {
                    out[l - 1].push((r, c));
                }
            }
        }
        out
    }

    pub fn check_matches(&self, cube: &HsiCube) -> Result<()> {
        if (self.rows, self.cols) != (cube.rows, cube.cols) {
            return Err(Error::format(format!(
                "label raster is {}x{} but the cube is {}x{}",
                self.rows, self.cols, cube.rows, cube.cols
            )));
        }
        Ok(())
    }
}
