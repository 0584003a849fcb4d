//! The command implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use drddl::hsidata::{synth_mixed_noise, synth_scene, write_envi, write_split_csv, LabelRaster};
use drddl::layers::{train_dense_layer, train_robust_layer};
use drddl::metrics::confusion;
use drddl::network::{
    load_model, model_to_bytes, predict_batch, train_with_report, EncodeConfig,
};
use drddl::random::{gaussian_mat, seeded};
use drddl::{Activation, DrddlModel};
use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::output::{sha256_hex, OutputDir};
use crate::pipeline::{self, Features, FEATURES_FILE};
use crate::render;

pub const MODEL_FILE: &str = "model.drddl";

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

#[derive(Serialize)]
struct LayerEntry {
    width: usize,
    iterations: usize,
    converged: bool,
    final_objective: f64,
    clamped_inputs: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    config: &'a RunConfig,
    seed: u64,
    arch: &'a [usize],
    feature_dim: usize,
    train_samples: usize,
    test_samples: usize,
    model_sha256: String,
    layers: Vec<LayerEntry>,
    wall_time_secs: f64,
}

fn encode_config(cfg: &RunConfig) -> EncodeConfig {
    EncodeConfig {
        irls: cfg.solver.irls,
        ista: cfg.ista(),
    }
}

fn load(path: &Path) -> CliResult<DrddlModel> {
    if !path.exists() {
        return Err(CliError::io(path, std::io::ErrorKind::NotFound.into()));
    }
    load_model(path).context(|| format!("loading model {}", path.display()))
}

pub fn train(cfg: &RunConfig, out: OutputDir) -> CliResult<()> {
    let started = Instant::now();
    let ds = pipeline::load_dataset(cfg)?;
    let split = pipeline::split(cfg, &ds.labels)?;
    let features = Features::fit(cfg, &ds.cube, &split.train)?;
    let dim = features.dim(&ds.cube);
    if cfg.arch[0] > dim {
        return Err(CliError::Config(format!(
            "first layer width {} exceeds the feature dimension {dim}",
            cfg.arch[0]
        )));
    }
    let x = features.extract(&ds.cube, &split.train)?;
    let labels = split.labels_of(&ds.labels, true);
    info!("training {:?} on {} samples of dimension {dim}", cfg.arch, x.ncols());

    let (model, report) =
        train_with_report(&x, &labels, &cfg.train_spec()).context(|| "training".to_string())?;
    let bytes = model_to_bytes(&model).context(|| "serializing the model".to_string())?;
    out.write(MODEL_FILE, &bytes)?;
    let split_path = out.file("split.csv");
    write_split_csv(&split, &split_path).context(|| format!("writing {}", split_path.display()))?;
    if let Some(json) = features.to_json() {
        out.write(FEATURES_FILE, json)?;
    }

    let model_sha256 = sha256_hex(&bytes);
    let manifest = Manifest {
        tool: "drddl",
        version: env!("CARGO_PKG_VERSION"),
        command: "train",
        config_sha256: sha256_hex(cfg.canonical_json()),
        config: cfg,
        seed: cfg.seed,
        arch: &cfg.arch,
        feature_dim: dim,
        train_samples: split.train.len(),
        test_samples: split.test.len(),
        model_sha256: model_sha256.clone(),
        layers: report
            .layers
            .iter()
            .map(|l| LayerEntry {
                width: l.width,
                iterations: l.iterations,
                converged: l.converged,
                final_objective: l.final_objective,
                clamped_inputs: l.clamped_inputs,
            })
            .collect(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    out.write("manifest.json", serde_json::to_string_pretty(&manifest).unwrap() + "\n")?;
    emit(&format!("model {} sha256 {model_sha256}\n", out.file(MODEL_FILE).display()));
    Ok(())
}

pub fn eval(cfg: &RunConfig, model_path: &Path, out: OutputDir) -> CliResult<()> {
    let model = load(model_path)?;
    let ds = pipeline::load_dataset(cfg)?;
    let split = pipeline::split(cfg, &ds.labels)?;
    let features = Features::for_model(cfg, model_path, &ds.cube, &split.train)?;
    let x = features.extract(&ds.cube, &split.test)?;
    let truth = split.labels_of(&ds.labels, false);
    if truth.is_empty() {
        return Err(CliError::Config("the split has no test pixels".into()));
    }
    let pred = predict_batch(&model, &x, &encode_config(cfg)).context(|| "encoding the test split".to_string())?;

    let classes = model.num_classes.max(ds.labels.num_classes());
    let cm = confusion(&truth, &pred, classes).context(|| "tallying predictions".to_string())?;
    let text = cm.report_text().context(|| "computing metrics".to_string())?;
    out.write("metrics.txt", &text)?;
    out.write("metrics.csv", cm.report_csv().context(|| "computing metrics".to_string())?)?;
    out.write("confusion.csv", cm.to_csv())?;
    let mut preds = String::from("row,col,truth,pred\n");
    for ((&(r, c), t), p) in split.test.iter().zip(&truth).zip(&pred) {
        preds.push_str(&format!("{r},{c},{t},{p}\n"));
    }
    out.write("predictions.csv", preds)?;
    emit(&text);
    Ok(())
}

pub fn map(
    cfg: &RunConfig,
    model_path: Option<&Path>,
    all_pixels: bool,
    groundtruth: bool,
    out: OutputDir,
) -> CliResult<()> {
    let ds = pipeline::load_dataset(cfg)?;
    let (rows, cols) = (ds.labels.rows, ds.labels.cols);
    let (grid, stem) = if groundtruth {
        (ds.labels.labels.clone(), "groundtruth")
    } else {
        let model_path = model_path
            .ok_or_else(|| CliError::Config("map needs --model unless --groundtruth is given".into()))?;
        let model = load(model_path)?;
        let split = pipeline::split(cfg, &ds.labels)?;
        let features = Features::for_model(cfg, model_path, &ds.cube, &split.train)?;
        let pixels = pipeline::map_pixels(&ds.labels, all_pixels);
        let x = features.extract(&ds.cube, &pixels)?;
        let pred = predict_batch(&model, &x, &encode_config(cfg)).context(|| "classifying pixels".to_string())?;
        let mut grid = vec![0u32; rows * cols];
        for (&(r, c), p) in pixels.iter().zip(pred) {
            grid[r * cols + c] = p as u32;
        }
        (grid, "map")
    };
    let raster = LabelRaster::new(rows, cols, grid).context(|| "assembling the map".to_string())?;
    out.write(&format!("{stem}.ppm"), render::ppm(rows, cols, &raster.labels))?;
    out.write(&format!("{stem}.csv"), render::grid_csv(cols, &raster.labels))?;
    emit(&format!("{}\n", out.file(&format!("{stem}.ppm")).display()));
    Ok(())
}

pub fn split(cfg: &RunConfig, out: OutputDir) -> CliResult<()> {
    let ds = pipeline::load_dataset(cfg)?;
    let split = pipeline::split(cfg, &ds.labels)?;
    let path = out.file("split.csv");
    write_split_csv(&split, &path).context(|| format!("writing {}", path.display()))?;
    let train = split.labels_of(&ds.labels, true);
    let test = split.labels_of(&ds.labels, false);
    let mut table = String::from("class,train,test\n");
    for c in 1..=ds.labels.num_classes() {
        let n = |v: &[usize]| v.iter().filter(|&&l| l == c).count();
        table.push_str(&format!("{c},{},{}\n", n(&train), n(&test)));
    }
    emit(&table);
    Ok(())
}

#[derive(Serialize)]
struct SynthRun {
    seed: u64,
    robust_clean_error: f64,
    dense_clean_error: f64,
    robust_relative_error: f64,
    dense_relative_error: f64,
    robust_wins: bool,
    robust_rounds: usize,
    split_residual: f64,
}

#[derive(Serialize)]
struct SynthReport<'a> {
    settings: &'a crate::config::SynthSettings,
    robust: &'a drddl::RobustTrainConfig,
    base_seed: u64,
    runs: Vec<SynthRun>,
    robust_wins: usize,
    total: usize,
    win_rate: f64,
}

pub fn synth(cfg: &RunConfig, out: OutputDir) -> CliResult<()> {
    let s = &cfg.synth;
    let mut runs = Vec::with_capacity(s.seeds);
    for i in 0..s.seeds as u64 {
        let seed = cfg.seed.wrapping_add(i);
        let mut rng = seeded(seed);
        let dict = gaussian_mat(s.rows, s.atoms, &mut rng);
        let codes = gaussian_mat(s.atoms, s.samples, &mut rng);
        let data = synth_mixed_noise(&dict, &codes, s.sigma, s.spike_frac, s.spike_mag, seed)
            .context(|| format!("seed {seed}: generating data"))?;
        let robust = train_robust_layer(&data.noisy, s.atoms, &cfg.solver.robust, seed)
            .context(|| format!("seed {seed}: robust layer"))?;
        let dense = train_dense_layer(&data.noisy, s.atoms, s.dense_iters, Activation::identity(), seed)
            .context(|| format!("seed {seed}: dense layer"))?;
        let clean_norm = data.clean.norm().max(f64::MIN_POSITIVE);
        let err_r = (&data.clean - &robust.layer.dictionary * &robust.codes).norm();
        let err_d = (&data.clean - &dense.layer.dictionary * &dense.codes).norm();
        info!("seed {seed}: robust {err_r:.4e} dense {err_d:.4e}");
        runs.push(SynthRun {
            seed,
            robust_clean_error: err_r,
            dense_clean_error: err_d,
            robust_relative_error: err_r / clean_norm,
            dense_relative_error: err_d / clean_norm,
            robust_wins: err_r < err_d,
            robust_rounds: robust.report.iterations,
            split_residual: robust.primal_residual,
        });
    }
    let wins = runs.iter().filter(|r| r.robust_wins).count();
    let report = SynthReport {
        settings: s,
        robust: &cfg.solver.robust,
        base_seed: cfg.seed,
        total: runs.len(),
        win_rate: wins as f64 / runs.len() as f64,
        runs,
        robust_wins: wins,
    };
    out.write("synth.json", serde_json::to_string_pretty(&report).unwrap() + "\n")?;
    emit(&format!("robust wins {wins}/{}\n", report.total));
    Ok(())
}

/// Parameters of the demo scene written by `make-scene`.
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub classes: usize,
    pub seed: u64,
}

pub fn make_scene(spec: &SceneSpec, dir: &Path) -> CliResult<PathBuf> {
    let (cube, labels) = synth_scene(spec.rows, spec.cols, spec.bands, spec.classes, spec.seed)
        .context(|| "generating the scene".to_string())?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let (hdr, img, lab) = (dir.join("scene.hdr"), dir.join("scene.img"), dir.join("labels.csv"));
    write_envi(&cube, &hdr, &img).context(|| format!("writing {}", img.display()))?;
    pipeline::write_labels(&lab, &labels)?;

    let w1 = (spec.bands / 5).max(spec.classes + 2).min(spec.bands);
    let w2 = (w1 * 3 / 4).max(spec.classes).min(w1);
    let w3 = spec.classes.min(w2);
    let config = serde_json::json!({
        "dataset": {"header": "scene.hdr", "data": "scene.img", "labels": "labels.csv"},
        "split": {"fraction": 0.2},
        "arch": [w1, w2, w3],
        "lambda": 0.2,
        "mu": 1.0,
        "activation": "identity",
        "features": {"mode": "raw"},
        "seed": spec.seed,
        "output_dir": "run"
    });
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap() + "\n")
        .map_err(|e| CliError::io(&cfg_path, e))?;
    emit(&format!("{}\n", cfg_path.display()));
    Ok(cfg_path)
}
