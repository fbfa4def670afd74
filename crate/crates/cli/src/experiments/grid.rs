//! The two-dimensional benchmark: invert a noisy grid circuit compiled to
//! a PEPO and measure how close inverse ∘ circuit gets to the identity.
//!
//! Boundary-MPS contractions make every 2D distance approximate, so each
//! one is evaluated twice, at the configured χ and at 2χ; matching values
//! mean the contraction is converged, drifting ones flag χ as too small.
//! Summaries are geometric, like the 1D channel benchmarks.

use mpoqem::pepo::{
    generate_test_circuit_2d, pepo_compose, pepo_from_circuit_2d, relative_distance_pepo,
    trace_infidelity_pepo, BoundaryContractionConfig, Pepo,
};
use mpoqem::TruncationConfig;

use super::{file_name, fmt_point, Outcome, RunContext};
use crate::config::ExperimentConfig;
use crate::output::{self, ResultTable, Statistic, TableSchema};
use crate::runner::run_jobs;

struct GridResult {
    bond: usize,
    sweeps: usize,
    converged: bool,
    baseline_lo: f64,
    baseline_hi: f64,
    inverse_distance_lo: f64,
    inverse_distance_hi: f64,
    trace_infidelity: f64,
    /// `(error, trace_infidelity)` after sweep k, starting at the initial
    /// guess (k = 0).
    history: Vec<(f64, f64)>,
}

/// PEPO inverse accuracy on noisy grid circuits across error rates. Uses
/// the first `depths` entry; the per-sweep convergence record goes to a
/// companion history CSV.
pub fn pepo_inverse(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<Outcome> {
    let (rows, cols) = (cfg.grid_rows, cfg.grid_cols);
    let depth = cfg.depths[0];
    let mut jobs = Vec::new();
    for &eps_two in &cfg.eps_two {
        for seed in cfg.seeds() {
            jobs.push((eps_two, seed));
        }
    }

    // cutoff-only compiles keep the channel exact (noisy links sit at the
    // operator-Schmidt rank of a depolarized CNOT, which is small), so the
    // inverse bond can simply match the compiled bond
    let exact = TruncationConfig::default();
    let lo = BoundaryContractionConfig::new(cfg.metric_chi);
    let hi = BoundaryContractionConfig::new(2 * cfg.metric_chi);
    let run = |(eps_two, seed): &(f64, u64)| -> Result<GridResult, String> {
        let spec = generate_test_circuit_2d(rows, cols, depth, *seed, *eps_two)
            .map_err(|e| e.to_string())?;
        let (noisy, _) = pepo_from_circuit_2d(&spec, true, &exact).map_err(|e| e.to_string())?;
        let (ideal, _) = pepo_from_circuit_2d(&spec, false, &exact).map_err(|e| e.to_string())?;
        let bond = noisy.max_bond();
        let bcfg = BoundaryContractionConfig::for_bond(bond);
        let (inv, report) =
            mpoqem::pepo::pepo_inverse(&noisy, bond, &bcfg, cfg.max_sweeps, 1e-10)
                .map_err(|e| e.to_string())?;

        let baseline_lo = relative_distance_pepo(&noisy, &ideal, &lo).map_err(|e| e.to_string())?;
        let baseline_hi = relative_distance_pepo(&noisy, &ideal, &hi).map_err(|e| e.to_string())?;
        let composed = pepo_compose(&inv, &noisy, &exact).map_err(|e| e.to_string())?;
        let id = Pepo::identity(rows, cols).map_err(|e| e.to_string())?;
        let inverse_distance_lo =
            relative_distance_pepo(&composed, &id, &lo).map_err(|e| e.to_string())?;
        let inverse_distance_hi =
            relative_distance_pepo(&composed, &id, &hi).map_err(|e| e.to_string())?;
        let trace_infidelity =
            trace_infidelity_pepo(&composed, &lo).map_err(|e| e.to_string())?;

        // per sweep: the last site error of the sweep plus the trace
        // infidelity recorded after it; entry 0 is the initial guess
        let per_sweep = 2 * rows * cols;
        let history = report
            .trace_infidelity_history
            .iter()
            .enumerate()
            .map(|(k, &ti)| (report.error_history[k * per_sweep], ti))
            .collect();
        Ok(GridResult {
            bond,
            sweeps: report.sweeps_used,
            converged: report.converged,
            baseline_lo,
            baseline_hi,
            inverse_distance_lo,
            inverse_distance_hi,
            trace_infidelity,
            history,
        })
    };
    let describe = |(eps_two, seed): &(f64, u64)| {
        (format!("{rows}x{cols} depth={depth} eps2={eps_two}"), *seed)
    };
    let (ok, failures) =
        run_jobs(ctx.threads, &jobs, run, describe).map_err(anyhow::Error::msg)?;

    let mut table = ResultTable::new(TableSchema {
        point_cols: vec!["rows", "cols", "depth", "eps_two"],
        sample_cols: vec!["bond", "sweeps", "converged"],
        value_cols: vec![
            "baseline_lo",
            "baseline_hi",
            "inverse_distance_lo",
            "inverse_distance_hi",
            "trace_infidelity",
        ],
        statistic: Statistic::Geometric,
    });
    let mut history_rows = Vec::new();
    for (i, r) in &ok {
        let (eps_two, seed) = &jobs[*i];
        table.push_sample(
            vec![
                rows.to_string(),
                cols.to_string(),
                depth.to_string(),
                fmt_point(*eps_two),
            ],
            *seed,
            vec![r.bond.to_string(), r.sweeps.to_string(), r.converged.to_string()],
            vec![
                r.baseline_lo,
                r.baseline_hi,
                r.inverse_distance_lo,
                r.inverse_distance_hi,
                r.trace_infidelity,
            ],
        );
        for (sweep, &(err, ti)) in r.history.iter().enumerate() {
            history_rows.push(vec![
                rows.to_string(),
                cols.to_string(),
                depth.to_string(),
                fmt_point(*eps_two),
                seed.to_string(),
                sweep.to_string(),
                output::fmt_value(err),
                output::fmt_value(ti),
            ]);
        }
    }

    let history_path = ctx.out_dir.join("pepo-inverse-history.csv");
    output::write_plain_csv(
        &history_path,
        "pepo-inverse per-sweep convergence",
        "rows,cols,depth,eps_two,seed,sweep,error,trace_infidelity",
        &history_rows,
    )?;
    Ok(Outcome {
        table,
        extra_csv: vec![file_name(&history_path)],
        failures,
        derived: serde_json::Value::Null,
    })
}
