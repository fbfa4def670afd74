//! Command-line entry point: one subcommand per experiment, each runnable
//! from its built-in preset, the published (`--paper-scale`) sizes, or a
//! TOML configuration file.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use mpoqem_cli::config::{ExperimentConfig, ExperimentId};
use mpoqem_cli::experiments::{self, RunContext};

#[derive(Parser)]
#[command(
    name = "mpoqem",
    version,
    about = "Benchmarks for tensor-network quantum error mitigation",
    after_help = "Each experiment writes <out>/<experiment>.csv plus a JSON manifest.\n\
                  Presets are desk-scale; use --paper-scale or a TOML config for more."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inverse-circuit accuracy across noise families, rates, and bonds
    MpoInverseSweep(RunArgs),
    /// Correction-channel accuracy as its bond D' shrinks
    NoiseInverseDprime(RunArgs),
    /// Full pipeline on deep circuits: mitigated vs unmitigated states
    DeepQem(RunArgs),
    /// Output-state error growth with qubit count at fixed depth
    SizeScaling(RunArgs),
    /// Where mitigation stops paying off as the error rate grows
    ErrThreshold(RunArgs),
    /// Two-dimensional (PEPO) circuit inversion on a grid
    PepoInverse(RunArgs),
    /// Depth-scaling exponent as a function of qubit count
    AlphaVsNq(RunArgs),
    /// Print an experiment's built-in configuration as TOML
    ShowConfig(ShowArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration; defaults to the built-in preset
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for the CSV tables and the run manifest
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override the configuration's base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configuration's repetition count
    #[arg(long)]
    reps: Option<usize>,
    /// Run the published problem sizes instead of the desk-scale preset
    /// (hours of runtime; not for CI)
    #[arg(long)]
    paper_scale: bool,
    /// Worker threads for the parameter sweep
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ShowArgs {
    /// Experiment name, spelled like the subcommand (e.g. deep-qem)
    experiment: String,
    /// Show the published problem sizes
    #[arg(long)]
    paper_scale: bool,
}

fn build_config(id: ExperimentId, args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            if args.paper_scale {
                bail!("--paper-scale selects a built-in preset; drop it when passing --config");
            }
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml(&text)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::preset(id, args.paper_scale),
    };
    if cfg.experiment != id {
        bail!(
            "configuration is for {}, but the {} subcommand was invoked",
            cfg.experiment,
            id
        );
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.repetitions = reps;
    }
    cfg.validate().map_err(anyhow::Error::msg)?;
    Ok(cfg)
}

fn show_config(args: &ShowArgs) -> anyhow::Result<()> {
    let Some(id) = ExperimentId::from_name(&args.experiment) else {
        bail!(
            "unknown experiment {:?}; expected one of: {}",
            args.experiment,
            ExperimentId::ALL.map(|id| id.name()).join(", ")
        );
    };
    let cfg = ExperimentConfig::preset(id, args.paper_scale);
    print!("{}", toml::to_string_pretty(&cfg).context("serializing preset")?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let (id, args) = match cli.command {
        Command::MpoInverseSweep(a) => (ExperimentId::MpoInverseSweep, a),
        Command::NoiseInverseDprime(a) => (ExperimentId::NoiseInverseDprime, a),
        Command::DeepQem(a) => (ExperimentId::DeepQem, a),
        Command::SizeScaling(a) => (ExperimentId::SizeScaling, a),
        Command::ErrThreshold(a) => (ExperimentId::ErrThreshold, a),
        Command::PepoInverse(a) => (ExperimentId::PepoInverse, a),
        Command::AlphaVsNq(a) => (ExperimentId::AlphaVsNq, a),
        Command::ShowConfig(a) => return show_config(&a),
    };
    let cfg = build_config(id, &args)?;
    let ctx = RunContext {
        out_dir: args.out,
        threads: args.threads,
        paper_scale: args.paper_scale,
    };
    experiments::run(&cfg, &ctx)
}
