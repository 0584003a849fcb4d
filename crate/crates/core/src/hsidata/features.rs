use super::{HsiCube, Pixel};
use crate::error::{Error, Result};
use crate::{Mat, Vector};

/// One column per pixel holding its full spectrum, in the given order.
pub fn extract_spectral_pixels(cube: &HsiCube, pixels: &[Pixel]) -> Result<Mat> {
    let mut out = Mat::zeros(cube.bands, pixels.len());
    for (j, &(r, c)) in pixels.iter().enumerate() {
        if r >= cube.rows || c >= cube.cols {
            return Err(Error::format(format!(
                "pixel ({r}, {c}) outside the {}x{} cube",
                cube.rows, cube.cols
            )));
        }
        for b in 0..cube.bands {
            out[(b, j)] = cube.get(r, c, b);
        }
    }
    Ok(out)
}

/// Principal directions of a training matrix.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pca {
    /// `k x d`, orthonormal rows, ordered by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Sample variance along each component.
    pub variances: Vec<f64>,
}

impl Pca {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn projection(&self) -> Mat {
        Mat::from_fn(self.k(), self.dim(), |i, j| self.components[i][j])
    }

    /// Projects the columns of `x` (`d x n`) to `k x n`.
    pub fn transform(&self, x: &Mat) -> Result<Mat> {
        if x.nrows() != self.dim() {
            return Err(Error::format(format!(
                "PCA fitted on {} features, got {}",
                self.dim(),
                x.nrows()
            )));
        }
        let mean = Vector::from_column_slice(&self.mean);
        let mut centered = x.clone();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        Ok(self.projection() * centered)
    }
}

/// Top-`k` principal components of the columns of `x`, from the SVD of the
/// centered data. Each component's largest-magnitude entry is positive.
pub fn pca_fit(x: &Mat, k: usize) -> Result<Pca> {
    let (d, n) = x.shape();
    if k == 0 || k > d.min(n) {
        return Err(Error::degenerate(format!(
            "PCA with k = {k} on {d} features and {n} samples"
        )));
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let svd = centered
        .try_svd(true, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical("PCA: SVD did not converge"))?;
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let denom = (n.max(2) - 1) as f64;
    let mut components = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut comp: Vec<f64> = u.column(i).iter().copied().collect();
        let pivot = comp
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            comp.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(comp);
        variances.push(svd.singular_values[i].powi(2) / denom);
    }
    Ok(Pca {
        components,
        mean: mean.iter().copied().collect(),
        variances,
    })
}

/// Half-sample symmetric reflection: -1 maps to 0, `n` maps to `n - 1`.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// Spatial-spectral features: a PCA fitted on training spectra, then per
/// pixel the `w x w` neighbourhood of every PCA band followed by the
/// pixel's own PCA projection.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PatchFeatures {
    pub patch_w: usize,
    pub pca: Pca,
}

impl PatchFeatures {
    /// Fits the PCA on `train` pixels only.
    pub fn fit(cube: &HsiCube, train: &[Pixel], patch_w: usize, pca_k: usize) -> Result<Self> {
        if patch_w % 2 == 0 {
            return Err(Error::degenerate(format!("patch width {patch_w} must be odd")));
        }
        let spectra = extract_spectral_pixels(cube, train)?;
        Ok(PatchFeatures {
            patch_w,
            pca: pca_fit(&spectra, pca_k)?,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.pca.k() * (self.patch_w * self.patch_w + 1)
    }

    pub fn extract(&self, cube: &HsiCube, pixels: &[Pixel]) -> Result<Mat> {
        extract_patch_features(cube, pixels, self.patch_w, &self.pca)
    }
}

/// See [`PatchFeatures`]. Neighbourhoods are flattened band by band, row
/// major within a band; borders are mirrored.
pub fn extract_patch_features(
    cube: &HsiCube,
    pixels: &[Pixel],
    patch_w: usize,
    pca: &Pca,
) -> Result<Mat> {
    if patch_w % 2 == 0 {
        return Err(Error::degenerate(format!("patch width {patch_w} must be odd")));
    }
    if pca.dim() != cube.bands {
        return Err(Error::format(format!(
            "PCA fitted on {} bands, cube has {}",
            pca.dim(),
            cube.bands
        )));
    }
    for &(r, c) in pixels {
        if r >= cube.rows || c >= cube.cols {
            return Err(Error::format(format!("pixel ({r}, {c}) outside the cube")));
        }
    }
    let k = pca.k();
    let (rows, cols) = (cube.rows, cube.cols);

    // PCA bands of the whole image, pixel-major: reduced[(r * cols + c) * k + b]
    let projection = pca.projection();
    let mut reduced = vec![0.0; rows * cols * k];
    let mut spectrum = Vector::zeros(cube.bands);
    for r in 0..rows {
        for c in 0..cols {
            for b in 0..cube.bands {
                spectrum[b] = cube.get(r, c, b) - pca.mean[b];
            }
            let p = &projection * &spectrum;
            reduced[(r * cols + c) * k..(r * cols + c + 1) * k].copy_from_slice(p.as_slice());
        }
    }

    let half = (patch_w / 2) as isize;
    let dim = k * (patch_w * patch_w + 1);
    let mut out = Mat::zeros(dim, pixels.len());
    for (j, &(r, c)) in pixels.iter().enumerate() {
        let mut col = out.column_mut(j);
        let mut idx = 0;
        for b in 0..k {
            for dr in -half..=half {
                let rr = mirror(r as isize + dr, rows);
                for dc in -half..=half {
                    let cc = mirror(c as isize + dc, cols);
                    col[idx] = reduced[(rr * cols + cc) * k + b];
                    idx += 1;
                }
            }
        }
        for b in 0..k {
            col[idx] = reduced[(r * cols + c) * k + b];
            idx += 1;
        }
    }
    Ok(out)
}
