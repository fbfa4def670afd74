//! Channel-level benchmarks: how well the fitted inverse undoes a noisy
//! circuit, and how much accuracy survives compressing the correction
//! channel. Distances here are between superoperators, so summaries are
//! geometric.

use mpoqem::channels::NoiseKind;
use mpoqem::circuit::{
    compile_ideal_mpo, compile_noisy_mpo, generate_test_circuit, NoiseProfile,
};
use mpoqem::inverse::{mpo_inverse, InverseConfig};
use mpoqem::mpo::{apply_mpo_layer, relative_distance_mpo, Mpo};
use mpoqem::qem::noise_inverse;
use mpoqem::TruncationConfig;

use super::{family_name, fmt_point, global_rate_cell, global_variants, Outcome, RunContext};
use crate::config::ExperimentConfig;
use crate::output::{ResultTable, Statistic, TableSchema};
use crate::runner::run_jobs;

/// A point in the inverse-accuracy sweep: one circuit family and rate,
/// one inverse bond, with or without the global layer.
struct InversePoint {
    n: usize,
    depth: usize,
    kind: NoiseKind,
    eps_two: f64,
    d_inv: usize,
    global: Option<f64>,
}

fn noisy_profile(kind: NoiseKind, eps_two: f64, global: Option<f64>, every: usize) -> NoiseProfile {
    let p = NoiseProfile::uniform(kind, eps_two);
    match global {
        Some(g) => p.with_global(g, every),
        None => p,
    }
}

/// `D(U′∘U, 1)` against the no-mitigation baseline `D(U, U⁰)` across noise
/// families, error rates, and inverse bonds.
pub fn mpo_inverse_sweep(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<Outcome> {
    let mut jobs = Vec::new();
    for &n in &cfg.n_qubits {
        for &depth in &cfg.depths {
            for kind in NoiseKind::ALL {
                for &eps_two in &cfg.eps_two {
                    for &d_inv in &cfg.d_inv {
                        for global in global_variants(cfg) {
                            for seed in cfg.seeds() {
                                jobs.push((
                                    InversePoint {
                                        n,
                                        depth,
                                        kind,
                                        eps_two,
                                        d_inv,
                                        global,
                                    },
                                    seed,
                                ));
                            }
                        }
                    }
                }
            }
        }
    }

    let exact = TruncationConfig::default();
    let run = |(p, seed): &(InversePoint, u64)| -> Result<(f64, f64, usize, bool), String> {
        let profile = noisy_profile(p.kind, p.eps_two, p.global, cfg.global_every);
        let spec = generate_test_circuit(p.n, p.depth, *seed, &profile)
            .map_err(|e| e.to_string())?;
        let ideal = compile_ideal_mpo(&spec, &exact).map_err(|e| e.to_string())?;
        let (noisy, _) = compile_noisy_mpo(
            &spec,
            &TruncationConfig::with_max_bond(cfg.compile_bond),
        )
        .map_err(|e| e.to_string())?;
        let (inv, report) = mpo_inverse(&noisy, &InverseConfig::with_bond_dim(p.d_inv))
            .map_err(|e| e.to_string())?;
        let baseline = relative_distance_mpo(&noisy, &ideal).map_err(|e| e.to_string())?;
        let (composed, _) = apply_mpo_layer(&noisy, &inv, &exact).map_err(|e| e.to_string())?;
        let id = Mpo::identity(p.n).map_err(|e| e.to_string())?;
        let inverse_distance =
            relative_distance_mpo(&composed, &id).map_err(|e| e.to_string())?;
        Ok((baseline, inverse_distance, report.sweeps_used, report.converged))
    };
    let describe = |(p, seed): &(InversePoint, u64)| {
        (
            format!(
                "n={} depth={} {} eps2={} D={} global={}",
                p.n,
                p.depth,
                family_name(p.kind),
                p.eps_two,
                p.d_inv,
                global_rate_cell(p.global)
            ),
            *seed,
        )
    };
    let (ok, failures) =
        run_jobs(ctx.threads, &jobs, run, describe).map_err(anyhow::Error::msg)?;

    let mut table = ResultTable::new(TableSchema {
        point_cols: vec!["n_qubits", "depth", "family", "eps_two", "d_inv", "global_rate"],
        sample_cols: vec!["sweeps", "converged"],
        value_cols: vec!["baseline", "inverse_distance"],
        statistic: Statistic::Geometric,
    });
    for (i, (baseline, inverse_distance, sweeps, converged)) in ok {
        let (p, seed) = &jobs[i];
        table.push_sample(
            vec![
                p.n.to_string(),
                p.depth.to_string(),
                family_name(p.kind).into(),
                fmt_point(p.eps_two),
                p.d_inv.to_string(),
                global_rate_cell(p.global),
            ],
            *seed,
            vec![sweeps.to_string(), converged.to_string()],
            vec![baseline, inverse_distance],
        );
    }
    Ok(Outcome {
        table,
        extra_csv: vec![],
        failures,
        derived: serde_json::Value::Null,
    })
}

/// `D(E⁻¹∘U, U⁰)` as the correction bond D′ varies, with the no-mitigation
/// value reported as the D′ = 0 row and, for runs with a global layer, the
/// floor of per-gate mitigation as the `each_gate` row.
pub fn noise_inverse_dprime(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<Outcome> {
    struct DprimePoint {
        n: usize,
        depth: usize,
        eps_two: f64,
        global: Option<f64>,
    }
    let mut jobs = Vec::new();
    for &n in &cfg.n_qubits {
        for &depth in &cfg.depths {
            for &eps_two in &cfg.eps_two {
                for global in global_variants(cfg) {
                    for seed in cfg.seeds() {
                        jobs.push((
                            DprimePoint {
                                n,
                                depth,
                                eps_two,
                                global,
                            },
                            seed,
                        ));
                    }
                }
            }
        }
    }

    // one chunk per (d′ label, distance), sharing the fitted inverse
    let exact = TruncationConfig::default();
    let d_inv = cfg.d_inv[0];
    let run = |(p, seed): &(DprimePoint, u64)| -> Result<Vec<(String, f64, f64)>, String> {
        let profile =
            noisy_profile(NoiseKind::Depolarizing, p.eps_two, p.global, cfg.global_every);
        let spec = generate_test_circuit(p.n, p.depth, *seed, &profile)
            .map_err(|e| e.to_string())?;
        let ideal = compile_ideal_mpo(&spec, &exact).map_err(|e| e.to_string())?;
        let (noisy, _) = compile_noisy_mpo(
            &spec,
            &TruncationConfig::with_max_bond(cfg.compile_bond),
        )
        .map_err(|e| e.to_string())?;
        let baseline = relative_distance_mpo(&noisy, &ideal).map_err(|e| e.to_string())?;
        let (inv, _) = mpo_inverse(&noisy, &InverseConfig::with_bond_dim(d_inv))
            .map_err(|e| e.to_string())?;
        let mut rows = vec![("0".to_string(), baseline, baseline)];
        for &d_prime in &cfg.d_prime {
            let (e_inv, _) = noise_inverse(&ideal, &inv, d_prime).map_err(|e| e.to_string())?;
            let (corrected, _) =
                apply_mpo_layer(&noisy, &e_inv, &exact).map_err(|e| e.to_string())?;
            let d = relative_distance_mpo(&corrected, &ideal).map_err(|e| e.to_string())?;
            rows.push((d_prime.to_string(), baseline, d));
        }
        if p.global.is_some() {
            // perfect per-gate mitigation leaves exactly the global layers
            let residual = spec.without_local_noise();
            let (floor, _) = compile_noisy_mpo(&residual, &exact).map_err(|e| e.to_string())?;
            let d = relative_distance_mpo(&floor, &ideal).map_err(|e| e.to_string())?;
            rows.push(("each_gate".to_string(), baseline, d));
        }
        Ok(rows)
    };
    let describe = |(p, seed): &(DprimePoint, u64)| {
        (
            format!(
                "n={} depth={} eps2={} global={}",
                p.n,
                p.depth,
                p.eps_two,
                global_rate_cell(p.global)
            ),
            *seed,
        )
    };
    let (ok, failures) =
        run_jobs(ctx.threads, &jobs, run, describe).map_err(anyhow::Error::msg)?;

    let mut table = ResultTable::new(TableSchema {
        point_cols: vec!["n_qubits", "depth", "eps_two", "global_rate", "d_prime"],
        sample_cols: vec![],
        value_cols: vec!["baseline", "corrected_distance"],
        statistic: Statistic::Geometric,
    });
    // each chunk carries every d′ label for one seed; re-sort so a point's
    // seeds are adjacent: (n, depth, eps, global, d′ label, seed)
    let mut emitted: Vec<((usize, usize, usize, usize, usize, u64), Vec<String>, u64, Vec<f64>)> =
        Vec::new();
    for (i, rows) in &ok {
        let (p, seed) = &jobs[*i];
        let eps_pos = cfg.eps_two.iter().position(|&e| e == p.eps_two).unwrap_or(0);
        for (label_pos, (row_label, baseline, distance)) in rows.iter().enumerate() {
            emitted.push((
                (
                    p.n,
                    p.depth,
                    eps_pos,
                    p.global.is_some() as usize,
                    label_pos,
                    *seed,
                ),
                vec![
                    p.n.to_string(),
                    p.depth.to_string(),
                    fmt_point(p.eps_two),
                    global_rate_cell(p.global),
                    row_label.clone(),
                ],
                *seed,
                vec![*baseline, *distance],
            ));
        }
    }
    emitted.sort_by(|a, b| a.0.cmp(&b.0));
    for (_, point, seed, values) in emitted {
        table.push_sample(point, seed, vec![], values);
    }
    Ok(Outcome {
        table,
        extra_csv: vec![],
        failures,
        derived: serde_json::Value::Null,
    })
}
