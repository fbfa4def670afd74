//! The experiment drivers behind each subcommand.
//!
//! Channel-level experiments (inverse accuracy, correction-channel
//! truncation, the 2D inverse) measure superoperator distances and share
//! geometric statistics; state-level experiments run the full mitigation
//! pipeline and compare output density matrices with arithmetic statistics.

mod channel;
mod grid;
mod state;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mpoqem::channels::NoiseKind;

use crate::config::{ExperimentConfig, ExperimentId};
use crate::output::{self, Failure, ResultTable, RunManifest};

/// Run-wide knobs that come from the command line rather than the config.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub threads: usize,
    pub paper_scale: bool,
}

/// Dispatches to the experiment named in the configuration. Writes the CSV
/// table(s) and the manifest into the output directory and prints headline
/// numbers to stdout.
pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<()> {
    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let started = std::time::Instant::now();
    let outcome = match cfg.experiment {
        ExperimentId::MpoInverseSweep => channel::mpo_inverse_sweep(cfg, ctx)?,
        ExperimentId::NoiseInverseDprime => channel::noise_inverse_dprime(cfg, ctx)?,
        ExperimentId::DeepQem => state::deep_qem(cfg, ctx)?,
        ExperimentId::SizeScaling => state::size_scaling(cfg, ctx)?,
        ExperimentId::ErrThreshold => state::err_threshold(cfg, ctx)?,
        ExperimentId::PepoInverse => grid::pepo_inverse(cfg, ctx)?,
        ExperimentId::AlphaVsNq => state::alpha_vs_nq(cfg, ctx)?,
    };
    finish(cfg, ctx, outcome, started.elapsed().as_secs_f64())
}

/// What an experiment hands back for the manifest.
pub struct Outcome {
    pub table: ResultTable,
    pub extra_csv: Vec<String>,
    pub failures: Vec<Failure>,
    pub derived: serde_json::Value,
}

fn finish(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    outcome: Outcome,
    wall_seconds: f64,
) -> anyhow::Result<()> {
    let name = cfg.experiment.name();
    if outcome.table.n_samples() == 0 {
        bail!("every job failed; see the messages above");
    }
    let csv_path = ctx.out_dir.join(format!("{name}.csv"));
    outcome
        .table
        .write(&csv_path, name)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    let mut csv_files = vec![csv_path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default()];
    csv_files.extend(outcome.extra_csv);
    let manifest_path = ctx.out_dir.join(format!("{name}-manifest.json"));
    output::write_manifest(
        &manifest_path,
        &RunManifest {
            experiment: name,
            written_unix: output::unix_now(),
            paper_scale: ctx.paper_scale,
            threads: ctx.threads,
            config: cfg,
            statistic: outcome.table.schema().statistic.describe(),
            csv_files,
            sample_rows: outcome.table.n_samples(),
            failures: &outcome.failures,
            derived: outcome.derived,
            wall_seconds,
        },
    )
    .with_context(|| format!("writing {}", manifest_path.display()))?;
    println!(
        "{name}: {} sample rows, {} failures, {:.1} s -> {}",
        outcome.table.n_samples(),
        outcome.failures.len(),
        wall_seconds,
        ctx.out_dir.display()
    );
    Ok(())
}

/// The global-layer variants a config asks for: always the local-only run,
/// plus one with the correlated channel when a rate is configured.
pub(crate) fn global_variants(cfg: &ExperimentConfig) -> Vec<Option<f64>> {
    match cfg.global_rate {
        Some(g) => vec![None, Some(g)],
        None => vec![None],
    }
}

/// CSV cell for the global-rate point column; the local-only variant
/// prints as rate 0.
pub(crate) fn global_rate_cell(global: Option<f64>) -> String {
    fmt_point(global.unwrap_or(0.0))
}

/// Stable snake_case labels for CSV cells.
pub(crate) fn family_name(kind: NoiseKind) -> &'static str {
    match kind {
        NoiseKind::Depolarizing => "depolarizing",
        NoiseKind::Dephasing => "dephasing",
        NoiseKind::BitFlip => "bit_flip",
        NoiseKind::AmplitudeDamping => "amplitude_damping",
    }
}

/// Point-column formatting: Rust's shortest round-trip float notation,
/// compact for grid values like 0.05 and still exact.
pub(crate) fn fmt_point(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default()
}
