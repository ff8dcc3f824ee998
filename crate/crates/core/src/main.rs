use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use neuralto::runner::{self, Manifest, RunConfig};
use neuralto::{Error, Result};

#[derive(Parser)]
#[command(
    name = "neuralto",
    version,
    about = "Topology optimization with neural reparameterizations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named run configuration (optimize, trajectory, search).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optimizer steps.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization.
    Optimize(Common),
    /// Run one optimization and write gradient diagnostics.
    Trajectory {
        #[command(flatten)]
        common: Common,
        /// Relative tolerance for the saturation iteration.
        #[arg(long, default_value_t = runner::CONVERGENCE_TOL)]
        tol: f64,
    },
    /// Slice the objective between two reference designs.
    Landscape(Common),
    /// Fit architectures to target designs and report PSNR.
    Expressivity(Common),
    /// Performance profiles over a directory of runs.
    Profile(Common),
    /// Grid or random hyperparameter search.
    Search(Common),
    /// Snap a design to black and white and evaluate it.
    Threshold(Common),
    /// List the preset names.
    Presets,
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn need_config<T: DeserializeOwned>(c: &Common) -> Result<T> {
    match &c.config {
        Some(p) => load(p),
        None => Err(Error::Parameter("this command needs --config".into())),
    }
}

fn run_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match (&c.preset, &c.config) {
        (Some(_), Some(_)) => {
            return Err(Error::Parameter(
                "give either --preset or --config, not both".into(),
            ))
        }
        (Some(name), None) => runner::preset(name)?,
        (None, Some(p)) => load(p)?,
        (None, None) => return Err(Error::Parameter("give --preset or --config".into())),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(b) = c.budget {
        cfg.budget = b;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, from_config: &Option<PathBuf>, command: &str) -> PathBuf {
    c.out
        .clone()
        .or_else(|| from_config.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(command))
}

fn dispatch(command: Command) -> Result<Option<(Manifest, PathBuf)>> {
    let done = |m: Manifest, out: PathBuf| Ok(Some((m, out)));
    match command {
        Command::Presets => {
            for name in runner::preset_names() {
                println!("{name}");
            }
            Ok(None)
        }
        Command::Optimize(c) => {
            let cfg = run_config(&c)?;
            let out = out_dir(&c, &cfg.out, "optimize");
            done(runner::cmd_optimize(&cfg, &out)?, out)
        }
        Command::Trajectory { common: c, tol } => {
            let cfg = run_config(&c)?;
            let out = out_dir(&c, &cfg.out, "trajectory");
            done(runner::cmd_trajectory(&cfg, &out, tol)?, out)
        }
        Command::Landscape(c) => {
            let mut cfg: runner::LandscapeConfig = need_config(&c)?;
            if let Some(s) = c.seed {
                cfg.options.seed = s;
            }
            let out = out_dir(&c, &cfg.out, "landscape");
            done(runner::cmd_landscape(&cfg, &out)?, out)
        }
        Command::Expressivity(c) => {
            let mut cfg: runner::ExpressivityConfig = need_config(&c)?;
            if let Some(s) = c.seed {
                cfg.options.seed = s;
            }
            let out = out_dir(&c, &cfg.out, "expressivity");
            done(runner::cmd_expressivity(&cfg, &out)?, out)
        }
        Command::Profile(c) => {
            let cfg: runner::ProfileConfig = need_config(&c)?;
            let out = out_dir(&c, &cfg.out, "profile");
            done(runner::cmd_profile(&cfg, &out)?, out)
        }
        Command::Search(c) => {
            let mut spec: runner::SearchSpec = match &c.preset {
                Some(name) => runner::SearchSpec {
                    base: runner::preset(name)?,
                    mode: runner::SearchMode::Grid,
                    grid: Default::default(),
                    ranges: Default::default(),
                    trials: 1,
                    budget: 60,
                    seed: 0,
                    out: None,
                },
                None => need_config(&c)?,
            };
            if let Some(s) = c.seed {
                spec.seed = s;
            }
            if let Some(b) = c.budget {
                spec.budget = b;
            }
            let out = out_dir(&c, &spec.out, "search");
            done(runner::cmd_search(&spec, &out)?, out)
        }
        Command::Threshold(c) => {
            let cfg: runner::ThresholdConfig = need_config(&c)?;
            let out = out_dir(&c, &cfg.out, "threshold");
            done(runner::cmd_threshold(&cfg, &out)?, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some((manifest, out))) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&manifest.results).unwrap_or_default()
            );
            eprintln!("artifacts in {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
