use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use xicp::experiment::{self, ExperimentConfig};
use xicp::Handler;

#[derive(Parser)]
#[command(name = "xicp", version, about = "Localizability-aware ICP experiments on synthetic worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world, ground-truth trajectory and scans.
    Simulate(RunArgs),
    /// Run the scan-to-map pipeline with one degeneracy handler.
    Register {
        #[command(flatten)]
        run: RunArgs,
        /// none, xicp, xs-icp, remap or remap-adaptive. Defaults to the config value.
        #[arg(long)]
        handler: Option<Handler>,
        /// Eigenvalue threshold of the fixed remapping baseline.
        #[arg(long)]
        remap_threshold: Option<f64>,
    },
    /// Score a registration run against a simulation directory.
    Evaluate { run_dir: PathBuf, truth_dir: PathBuf },
    /// Join the metrics of evaluated runs into one table.
    Compare {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, env = "XICP_OUT", default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the world, scans and prior noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides the config.
    #[arg(long, env = "XICP_OUT")]
    out: Option<PathBuf>,
}

/// Failures before any work starts are usage errors.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Usage)?;
            ExperimentConfig::from_toml(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(Failure::Usage)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn summary_line(dir: &Path) -> String {
    format!("wrote {}", dir.display())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            let data = experiment::cmd_simulate(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
            println!("{} frames, {}", data.scans.len(), summary_line(&cfg.output_dir));
        }
        Command::Register { run, handler, remap_threshold } => {
            let mut cfg = load(&run)?;
            if let Some(t) = remap_threshold {
                cfg.baseline.eigenvalue_threshold = t;
                cfg.validate().context("--remap-threshold").map_err(Failure::Usage)?;
            }
            let handler = handler.unwrap_or(cfg.icp.handler);
            let out = experiment::cmd_register(&cfg, handler).map_err(|e| Failure::Runtime(e.into()))?;
            println!(
                "{handler}: {} frames, {} fell back to the prior, {}",
                out.frames.len(),
                out.failed_frames(),
                summary_line(&cfg.output_dir)
            );
        }
        Command::Evaluate { run_dir, truth_dir } => {
            let eval = experiment::cmd_evaluate(&run_dir, &truth_dir).map_err(|e| Failure::Runtime(e.into()))?;
            let ape = &eval.ape_origin;
            println!(
                "APE {:.4} m / {:.4} deg, end error {:.4} m, map RMSE {:.4} m",
                ape.stats.trans_mean, ape.stats.rot_mean_deg, ape.last_position_error, eval.map.rmse
            );
        }
        Command::Compare { run_dirs, out } => {
            let path = experiment::cmd_compare(&run_dirs, &out).map_err(|e| Failure::Runtime(e.into()))?;
            println!("{}", summary_line(&path));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
