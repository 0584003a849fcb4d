//! Run configuration: a JSON document, validated before any compute.

use std::path::{Path, PathBuf};

use drddl::hsidata::SplitPreset;
use drddl::layers::RobustTrainConfig;
use drddl::solvers::IrlsConfig;
use drddl::{ActivationKind, IstaConfig, TrainSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetPaths>,
    #[serde(default = "default_split")]
    pub split: SplitSpec,
    #[serde(default = "default_arch")]
    pub arch: Vec<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_activation")]
    pub activation: ActivationKind,
    #[serde(default)]
    pub features: FeatureMode,
    #[serde(default)]
    pub solver: SolverBudgets,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub synth: SynthSettings,
}

/// Paths are resolved against the directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub header: PathBuf,
    pub data: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    Preset(SplitPreset),
    Fraction(f64),
    Counts(Vec<usize>),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum FeatureMode {
    Raw {},
    PatchPca {
        #[serde(default = "default_patch_w")]
        patch_w: usize,
        #[serde(default = "default_pca_k")]
        pca_k: usize,
    },
}

impl Default for FeatureMode {
    fn default() -> Self {
        FeatureMode::Raw {}
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBudgets {
    pub robust: RobustTrainConfig,
    pub dense_iters: usize,
    pub final_iters: usize,
    /// `lambda` inside is ignored; the top-level value is used.
    pub ista: IstaBudget,
    pub irls: IrlsConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IstaBudget {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IstaBudget {
    fn default() -> Self {
        let d = IstaConfig::default();
        IstaBudget {
            max_iters: d.max_iters,
            tol: d.tol,
        }
    }
}

impl Default for SolverBudgets {
    fn default() -> Self {
        let spec = TrainSpec::default();
        SolverBudgets {
            robust: spec.robust,
            dense_iters: spec.dense_iters,
            final_iters: spec.final_iters,
            ista: IstaBudget::default(),
            irls: IrlsConfig::default(),
        }
    }
}

/// Settings of the robust-vs-dense experiment on synthetic mixed noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSettings {
    pub rows: usize,
    pub atoms: usize,
    pub samples: usize,
    pub sigma: f64,
    pub spike_frac: f64,
    pub spike_mag: f64,
    pub seeds: usize,
    pub dense_iters: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            rows: 20,
            atoms: 5,
            samples: 100,
            sigma: 0.01,
            spike_frac: 0.01,
            spike_mag: 10.0,
            seeds: 10,
            dense_iters: 50,
        }
    }
}

fn default_split() -> SplitSpec {
    SplitSpec::Fraction(0.1)
}
fn default_arch() -> Vec<usize> {
    TrainSpec::default().arch
}
fn default_lambda() -> f64 {
    0.2
}
fn default_mu() -> f64 {
    1.0
}
fn default_activation() -> ActivationKind {
    ActivationKind::Tanh
}
fn default_patch_w() -> usize {
    5
}
fn default_pca_k() -> usize {
    10
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub arch: Option<Vec<usize>>,
    pub activation: Option<ActivationKind>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(ds) = &mut self.dataset {
            join(&mut ds.header);
            join(&mut ds.data);
            join(&mut ds.labels);
        }
        if let SplitSpec::File(p) = &mut self.split {
            join(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.lambda {
            self.lambda = v;
        }
        if let Some(v) = o.mu {
            self.mu = v;
        }
        if let Some(v) = &o.arch {
            self.arch = v.clone();
        }
        if let Some(v) = o.activation {
            self.activation = v;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.arch.is_empty() || self.arch.contains(&0) {
            return bad(format!("arch {:?} needs at least one layer, all widths >= 1", self.arch));
        }
        if self.arch.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!("arch {:?} must not widen towards the classifier", self.arch));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be finite and > 0, got {}", self.mu));
        }
        match &self.split {
            SplitSpec::Fraction(f) if !(*f > 0.0 && *f <= 1.0) => {
                return bad(format!("split fraction must lie in (0, 1], got {f}"));
            }
            _ => {}
        }
        if let FeatureMode::PatchPca { patch_w, pca_k } = self.features {
            if patch_w % 2 == 0 {
                return bad(format!("patch_w must be odd, got {patch_w}"));
            }
            if pca_k == 0 {
                return bad("pca_k must be >= 1".into());
            }
        }
        let s = &self.solver;
        if !(s.robust.mu_bregman > 0.0) || s.robust.outer_iters == 0 {
            return bad("solver.robust needs mu_bregman > 0 and outer_iters >= 1".into());
        }
        if s.ista.max_iters == 0 || !(s.ista.tol >= 0.0) || s.irls.max_iters == 0 || !(s.irls.eps > 0.0) {
            return bad("solver budgets need max_iters >= 1, tol >= 0 and irls eps > 0".into());
        }
        let y = &self.synth;
        if y.atoms == 0 || y.atoms > y.rows || y.samples == 0 || y.seeds == 0 {
            return bad("synth needs 1 <= atoms <= rows, samples >= 1 and seeds >= 1".into());
        }
        if !(0.0..=1.0).contains(&y.spike_frac) || !(y.sigma >= 0.0) {
            return bad("synth needs spike_frac in [0, 1] and sigma >= 0".into());
        }
        Ok(())
    }

    pub fn dataset(&self) -> CliResult<&DatasetPaths> {
        self.dataset
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no 'dataset' section".into()))
    }

    pub fn train_spec(&self) -> TrainSpec {
        TrainSpec {
            arch: self.arch.clone(),
            lambda: self.lambda,
            mu_cls: self.mu,
            activation: self.activation,
            robust: self.solver.robust,
            dense_iters: self.solver.dense_iters,
            final_iters: self.solver.final_iters,
            ista: self.ista(),
            seed: self.seed,
        }
    }

    pub fn ista(&self) -> IstaConfig {
        IstaConfig {
            lambda: self.lambda,
            max_iters: self.solver.ista.max_iters,
            tol: self.solver.ista.tol,
        }
    }

    /// Canonical JSON used for hashing and for the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
