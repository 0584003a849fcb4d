//! `drddl`: train, evaluate and render discriminative robust deep
//! dictionary learning models on hyperspectral scenes.

mod commands;
mod config;
mod error;
mod output;
mod pipeline;
mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drddl::ActivationKind;

use config::{Overrides, RunConfig};
use error::CliResult;
use output::OutputDir;

#[derive(Parser)]
#[command(name = "drddl", version, about)]
struct Cli {
    /// More logging (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Root for relative output directories. Defaults to the directory of
    /// the config file.
    #[arg(long, env = "DRDDL_OUT", global = true, value_name = "DIR")]
    out_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes the model, split, manifest and features.
    Train(RunArgs),
    /// Evaluate a model on the test split; writes metrics and confusion matrix.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Render a classification map as PPM plus a label CSV.
    Map {
        #[command(flatten)]
        run: RunArgs,
        #[arg(short, long, required_unless_present = "groundtruth")]
        model: Option<PathBuf>,
        /// Classify every pixel, not only labeled ones.
        #[arg(long)]
        all_pixels: bool,
        /// Render the label raster instead of predictions.
        #[arg(long)]
        groundtruth: bool,
    },
    /// Robust vs. Euclidean first layer on synthetic mixed noise.
    Synth {
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds (overrides synth.seeds).
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Write the train/test split CSV only.
    Split(RunArgs),
    /// Write a small synthetic ENVI scene with labels and a starter config.
    MakeScene {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        rows: usize,
        #[arg(long, default_value_t = 30)]
        cols: usize,
        #[arg(long, default_value_t = 40)]
        bands: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration. Optional for `synth`.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_dir in the config).
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Layer widths, e.g. 150,100,30.
    #[arg(long, value_delimiter = ',')]
    arch: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_activation)]
    activation: Option<ActivationKind>,
}

fn parse_activation(s: &str) -> Result<ActivationKind, String> {
    s.parse().map_err(|e: drddl::Error| e.to_string())
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            lambda: self.lambda,
            mu: self.mu,
            arch: self.arch.clone(),
            activation: self.activation,
        }
    }

    /// Loads, overrides and validates the config, then locks the output
    /// directory.
    fn prepare(&self, out_root: Option<&Path>, need_config: bool) -> CliResult<(RunConfig, OutputDir)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None if need_config => return Err(error::CliError::Config("--config is required".into())),
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        cfg.validate()?;
        let config_dir = self.config.as_deref().and_then(Path::parent);
        let root = out_root.or(config_dir);
        let dir = output::resolve_dir(self.out.as_deref(), cfg.output_dir.as_deref(), root);
        Ok((cfg, OutputDir::acquire(dir)?))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let root = cli.out_root.as_deref();
    match cli.command {
        Command::Train(args) => {
            let (cfg, out) = args.prepare(root, true)?;
            commands::train(&cfg, out)
        }
        Command::Eval { run, model } => {
            let (cfg, out) = run.prepare(root, true)?;
            commands::eval(&cfg, &model, out)
        }
        Command::Map {
            run,
            model,
            all_pixels,
            groundtruth,
        } => {
            let (cfg, out) = run.prepare(root, true)?;
            commands::map(&cfg, model.as_deref(), all_pixels, groundtruth, out)
        }
        Command::Synth { run, seeds } => {
            let (mut cfg, out) = run.prepare(root, false)?;
            if let Some(n) = seeds {
                cfg.synth.seeds = n;
                cfg.validate()?;
            }
            commands::synth(&cfg, out)
        }
        Command::Split(args) => {
            let (cfg, out) = args.prepare(root, true)?;
            commands::split(&cfg, out)
        }
        Command::MakeScene {
            out,
            rows,
            cols,
            bands,
            classes,
            seed,
        } => {
            let spec = commands::SceneSpec {
                rows,
                cols,
                bands,
                classes,
                seed,
            };
            commands::make_scene(&spec, &out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
