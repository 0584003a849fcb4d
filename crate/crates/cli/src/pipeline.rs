//! Dataset loading, the split protocol and feature extraction shared by
//! the commands.

use std::path::Path;

use drddl::hsidata::{
    self, extract_spectral_pixels, make_split, read_envi, read_labels, read_split_csv,
    split_fraction, split_preset, HsiCube, LabelRaster, PatchFeatures, Pixel, Split,
};
use drddl::Mat;
use log::info;

use crate::config::{FeatureMode, RunConfig, SplitSpec};
use crate::error::{CliError, CliResult, Context};

pub const FEATURES_FILE: &str = "features.json";

pub struct Dataset {
    pub cube: HsiCube,
    pub labels: LabelRaster,
}

pub fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let paths = cfg.dataset()?;
    for p in [&paths.header, &paths.data, &paths.labels] {
        if !p.exists() {
            return Err(CliError::io(p, std::io::ErrorKind::NotFound.into()));
        }
    }
    let cube = read_envi(&paths.header, &paths.data)
        .context(|| format!("reading cube {}", paths.data.display()))?;
    let labels = read_labels(&paths.labels)
        .context(|| format!("reading labels {}", paths.labels.display()))?;
    labels
        .check_matches(&cube)
        .context(|| "pairing labels with cube".to_string())?;
    info!(
        "dataset {}x{}x{}, {} classes",
        cube.rows,
        cube.cols,
        cube.bands,
        labels.num_classes()
    );
    Ok(Dataset { cube, labels })
}

pub fn split(cfg: &RunConfig, labels: &LabelRaster) -> CliResult<Split> {
    let ctx = || "building the train/test split".to_string();
    match &cfg.split {
        SplitSpec::Preset(p) => split_preset(labels, *p, cfg.seed).context(ctx),
        SplitSpec::Fraction(f) => split_fraction(labels, *f, cfg.seed).context(ctx),
        SplitSpec::Counts(c) => make_split(labels, c, cfg.seed).context(ctx),
        SplitSpec::File(p) => {
            let s = read_split_csv(p, cfg.seed).context(|| format!("reading split {}", p.display()))?;
            check_split_against(&s, labels)?;
            Ok(s)
        }
    }
}

fn check_split_against(split: &Split, labels: &LabelRaster) -> CliResult<()> {
    for &(r, c) in split.train.iter().chain(&split.test) {
        if r >= labels.rows || c >= labels.cols || labels.get(r, c) == 0 {
            return Err(CliError::Config(format!(
                "split lists pixel ({r}, {c}), which is not a labeled pixel"
            )));
        }
    }
    Ok(())
}

/// Feature extractor fitted on the training pixels.
pub enum Features {
    Raw,
    Patch(PatchFeatures),
}

impl Features {
    pub fn fit(cfg: &RunConfig, cube: &HsiCube, train: &[Pixel]) -> CliResult<Self> {
        match cfg.features {
            FeatureMode::Raw {} => Ok(Features::Raw),
            FeatureMode::PatchPca { patch_w, pca_k } => PatchFeatures::fit(cube, train, patch_w, pca_k)
                .map(Features::Patch)
                .context(|| "fitting patch features".to_string()),
        }
    }

    /// The extractor saved next to a model, refitted from the training
    /// pixels when the file is missing.
    pub fn for_model(
        cfg: &RunConfig,
        model_path: &Path,
        cube: &HsiCube,
        train: &[Pixel],
    ) -> CliResult<Self> {
        if matches!(cfg.features, FeatureMode::Raw {}) {
            return Ok(Features::Raw);
        }
        let saved = model_path.with_file_name(FEATURES_FILE);
        if saved.exists() {
            let text = std::fs::read_to_string(&saved).map_err(|e| CliError::io(&saved, e))?;
            let pf: PatchFeatures = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", saved.display())))?;
            return Ok(Features::Patch(pf));
        }
        info!("{} not found, refitting features on the training split", saved.display());
        Features::fit(cfg, cube, train)
    }

    pub fn extract(&self, cube: &HsiCube, pixels: &[Pixel]) -> CliResult<Mat> {
        match self {
            Features::Raw => extract_spectral_pixels(cube, pixels),
            Features::Patch(pf) => pf.extract(cube, pixels),
        }
        .context(|| "extracting features".to_string())
    }

    pub fn dim(&self, cube: &HsiCube) -> usize {
        match self {
            Features::Raw => cube.bands,
            Features::Patch(pf) => pf.feature_dim(),
        }
    }

    pub fn to_json(&self) -> Option<String> {
        match self {
            Features::Raw => None,
            Features::Patch(pf) => Some(serde_json::to_string_pretty(pf).expect("features serialize")),
        }
    }
}

/// Every labeled pixel, or every pixel, in raster order.
pub fn map_pixels(labels: &LabelRaster, all: bool) -> Vec<Pixel> {
    (0..labels.rows)
        .flat_map(|r| (0..labels.cols).map(move |c| (r, c)))
        .filter(|&(r, c)| all || labels.get(r, c) > 0)
        .collect()
}

pub fn write_labels(path: &Path, raster: &LabelRaster) -> CliResult<()> {
    hsidata::write_labels_csv(raster, path).context(|| format!("writing {}", path.display()))
}
