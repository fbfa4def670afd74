//! State-level benchmarks: the full mitigation pipeline, judged by the
//! distance of the simulated output density matrix from the ideal one.
//! These sweep circuit shape (depth, width, error rate) and report
//! mitigated next to unmitigated distances, plus power-law fits of how
//! the error grows, with arithmetic summaries.

use mpoqem::channels::NoiseKind;
use mpoqem::circuit::{generate_test_circuit, NoiseProfile};
use mpoqem::inverse::InverseConfig;
use mpoqem::qem::{run_pipeline, CorrectionNoiseSpec, PipelineConfig, StateSimConfig};

use super::{fmt_point, global_rate_cell, global_variants, Outcome, RunContext};
use crate::config::ExperimentConfig;
use crate::fit::fit_power_law;
use crate::output::{ResultTable, Statistic, TableSchema};
use crate::runner::run_jobs;

/// One pipeline invocation: a mixed-family circuit of this shape and rate,
/// partitioned into `depth / layers_per_part` parts, with or without the
/// correlated channel.
struct PipelinePoint {
    n: usize,
    depth: usize,
    eps_two: f64,
    global: Option<f64>,
}

/// Mean error rate of the inserted correction gates at this grid point,
/// `None` for ideal corrections.
fn correction_rate(cfg: &ExperimentConfig, eps_two: f64) -> Option<f64> {
    if cfg.correction_tracks_eps {
        Some(eps_two / 10.0)
    } else {
        cfg.correction_eps_one
    }
}

/// Runs the pipeline once and returns `(unmitigated, mitigated)` output
/// state distances. Single-valued knobs (`d_inv`, `d_prime`) use the first
/// grid entry.
fn run_point(cfg: &ExperimentConfig, p: &PipelinePoint, seed: u64) -> Result<(f64, f64), String> {
    let mut profile = NoiseProfile::mixed(p.eps_two);
    if let Some(g) = p.global {
        profile = profile.with_global(g, cfg.global_every);
    }
    let spec = generate_test_circuit(p.n, p.depth, seed, &profile)
        .map_err(|e| e.to_string())?
        .with_partition(p.depth / cfg.layers_per_part, cfg.layers_per_part);
    let pipeline = PipelineConfig {
        compile_bond: cfg.compile_bond,
        inverse: InverseConfig::with_bond_dim(cfg.d_inv[0]),
        d_prime: cfg.d_prime[0],
        state_sim: StateSimConfig::with_chi(cfg.chi_state),
        correction_noise: correction_rate(cfg, p.eps_two).map(|rate| CorrectionNoiseSpec {
            kind: NoiseKind::Depolarizing,
            rate,
        }),
    };
    let record = run_pipeline(&spec, &pipeline).map_err(|e| e.to_string())?;
    Ok((record.unmitigated_distance, record.mitigated_distance))
}

fn describe_point((p, seed): &(PipelinePoint, u64)) -> (String, u64) {
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
}

/// Per-point arithmetic means of both distances, keyed by a caller-chosen
/// x coordinate, for the scaling fits. Points are filtered by `select`
/// first; means keep first-appearance order of x.
fn mean_curves(
    samples: &[(&PipelinePoint, (f64, f64))],
    select: impl Fn(&PipelinePoint) -> bool,
    x_of: impl Fn(&PipelinePoint) -> f64,
) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut xs: Vec<f64> = Vec::new();
    let mut sums: Vec<(f64, f64, usize)> = Vec::new();
    for (p, (unmit, mit)) in samples {
        if !select(p) {
            continue;
        }
        let x = x_of(p);
        let slot = match xs.iter().position(|&v| v == x) {
            Some(i) => i,
            None => {
                xs.push(x);
                sums.push((0.0, 0.0, 0));
                xs.len() - 1
            }
        };
        sums[slot].0 += unmit;
        sums[slot].1 += mit;
        sums[slot].2 += 1;
    }
    let unmit = xs
        .iter()
        .zip(&sums)
        .map(|(&x, &(u, _, k))| (x, u / k as f64))
        .collect();
    let mit = xs
        .iter()
        .zip(&sums)
        .map(|(&x, &(_, m, k))| (x, m / k as f64))
        .collect();
    (unmit, mit)
}

/// Power-law fits of both mean curves over one slice of the sweep:
/// exponents, fit quality, and how far the mitigated curve sits below the
/// unmitigated one (`suppression_factor` = 10^Δintercept). `None` when the
/// slice has fewer than three x values or a fit is degenerate.
fn scaling_fit(
    samples: &[(&PipelinePoint, (f64, f64))],
    select: impl Fn(&PipelinePoint) -> bool,
    x_of: impl Fn(&PipelinePoint) -> f64,
) -> Option<serde_json::Value> {
    let (unmit, mit) = mean_curves(samples, select, x_of);
    if unmit.len() < 3 {
        return None;
    }
    let fu = fit_power_law(&unmit).ok()?;
    let fm = fit_power_law(&mit).ok()?;
    let delta = fu.intercept - fm.intercept;
    Some(serde_json::json!({
        "exponent_unmitigated": fu.exponent,
        "exponent_mitigated": fm.exponent,
        "r_squared_unmitigated": fu.r_squared,
        "r_squared_mitigated": fm.r_squared,
        "delta_intercept": delta,
        "suppression_factor": 10f64.powf(delta),
    }))
}

/// Output-state error versus circuit depth, mitigated against unmitigated,
/// with and without the correlated channel. Uses the first `eps_two` entry;
/// the derived fits give the depth-scaling exponent of each curve.
pub fn deep_qem(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<Outcome> {
    let eps_two = cfg.eps_two[0];
    let mut jobs = Vec::new();
    for &n in &cfg.n_qubits {
        for &depth in &cfg.depths {
            for global in global_variants(cfg) {
                for seed in cfg.seeds() {
                    jobs.push((
                        PipelinePoint {
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
    let run = |(p, seed): &(PipelinePoint, u64)| run_point(cfg, p, *seed);
    let (ok, failures) =
        run_jobs(ctx.threads, &jobs, run, describe_point).map_err(anyhow::Error::msg)?;

    let mut table = ResultTable::new(TableSchema {
        point_cols: vec!["n_qubits", "depth", "global_rate"],
        sample_cols: vec![],
        value_cols: vec!["unmitigated", "mitigated"],
        statistic: Statistic::Arithmetic,
    });
    let mut samples = Vec::with_capacity(ok.len());
    for (i, (unmit, mit)) in &ok {
        let (p, seed) = &jobs[*i];
        table.push_sample(
            vec![
                p.n.to_string(),
                p.depth.to_string(),
                global_rate_cell(p.global),
            ],
            *seed,
            vec![],
            vec![*unmit, *mit],
        );
        samples.push((p, (*unmit, *mit)));
    }

    let mut fits = Vec::new();
    for &n in &cfg.n_qubits {
        for global in global_variants(cfg) {
            if let Some(fit) = scaling_fit(
                &samples,
                |p| p.n == n && p.global == global,
                |p| p.depth as f64,
            ) {
                fits.push(serde_json::json!({
                    "n_qubits": n,
                    "global_rate": global.unwrap_or(0.0),
                    "fit": fit,
                }));
            }
        }
    }
    Ok(Outcome {
        table,
        extra_csv: vec![],
        failures,
        derived: serde_json::json!({ "depth_scaling": fits }),
    })
}

/// Output-state error versus qubit count at fixed depth. The derived fits
/// give the width-scaling exponent of the mean distances.
pub fn size_scaling(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<Outcome> {
    let eps_two = cfg.eps_two[0];
    let mut jobs = Vec::new();
    for &n in &cfg.n_qubits {
        for &depth in &cfg.depths {
            for global in global_variants(cfg) {
                for seed in cfg.seeds() {
                    jobs.push((
                        PipelinePoint {
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
    let run = |(p, seed): &(PipelinePoint, u64)| run_point(cfg, p, *seed);
    let (ok, failures) =
        run_jobs(ctx.threads, &jobs, run, describe_point).map_err(anyhow::Error::msg)?;

    let mut table = ResultTable::new(TableSchema {
        point_cols: vec!["n_qubits", "depth", "global_rate"],
        sample_cols: vec![],
        value_cols: vec!["unmitigated", "mitigated"],
        statistic: Statistic::Arithmetic,
    });
    let mut samples = Vec::with_capacity(ok.len());
    for (i, (unmit, mit)) in &ok {
        let (p, seed) = &jobs[*i];
        table.push_sample(
            vec![
                p.n.to_string(),
                p.depth.to_string(),
                global_rate_cell(p.global),
            ],
            *seed,
            vec![],
            vec![*unmit, *mit],
        );
        samples.push((p, (*unmit, *mit)));
    }

    let mut fits = Vec::new();
    for &depth in &cfg.depths {
        for global in global_variants(cfg) {
            if let Some(fit) = scaling_fit(
                &samples,
                |p| p.depth == depth && p.global == global,
                |p| p.n as f64,
            ) {
                fits.push(serde_json::json!({
                    "depth": depth,
                    "global_rate": global.unwrap_or(0.0),
                    "fit": fit,
                }));
            }
        }
    }
    Ok(Outcome {
        table,
        extra_csv: vec![],
        failures,
        derived: serde_json::json!({ "size_scaling": fits }),
    })
}

/// Where mitigation stops paying off as the error rate grows: the ratio
/// mitigated/unmitigated per sample, with correction-gate noise tracking
/// the sweep rate when so configured. Derived output estimates the rate
/// where the mean ratio crosses 1.
pub fn err_threshold(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<Outcome> {
    let mut jobs = Vec::new();
    for &n in &cfg.n_qubits {
        for &depth in &cfg.depths {
            for &eps_two in &cfg.eps_two {
                for global in global_variants(cfg) {
                    for seed in cfg.seeds() {
                        jobs.push((
                            PipelinePoint {
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
    let run = |(p, seed): &(PipelinePoint, u64)| run_point(cfg, p, *seed);
    let (ok, failures) =
        run_jobs(ctx.threads, &jobs, run, describe_point).map_err(anyhow::Error::msg)?;

    let mut table = ResultTable::new(TableSchema {
        point_cols: vec!["n_qubits", "depth", "eps_two", "global_rate"],
        sample_cols: vec![],
        value_cols: vec!["unmitigated", "mitigated", "ratio"],
        statistic: Statistic::Arithmetic,
    });
    // mean ratio and advantage count per (n, depth, global) slice, in
    // ascending eps order for the crossing scan
    struct Slice {
        n: usize,
        depth: usize,
        global: Option<f64>,
        eps: Vec<f64>,
        ratio_sums: Vec<(f64, usize)>,
        advantage: Vec<usize>,
    }
    let mut slices: Vec<Slice> = Vec::new();
    for (i, (unmit, mit)) in &ok {
        let (p, seed) = &jobs[*i];
        let ratio = mit / unmit;
        table.push_sample(
            vec![
                p.n.to_string(),
                p.depth.to_string(),
                fmt_point(p.eps_two),
                global_rate_cell(p.global),
            ],
            *seed,
            vec![],
            vec![*unmit, *mit, ratio],
        );
        let slice = match slices
            .iter_mut()
            .find(|s| s.n == p.n && s.depth == p.depth && s.global == p.global)
        {
            Some(s) => s,
            None => {
                slices.push(Slice {
                    n: p.n,
                    depth: p.depth,
                    global: p.global,
                    eps: Vec::new(),
                    ratio_sums: Vec::new(),
                    advantage: Vec::new(),
                });
                slices.last_mut().unwrap()
            }
        };
        let slot = match slice.eps.iter().position(|&e| e == p.eps_two) {
            Some(i) => i,
            None => {
                slice.eps.push(p.eps_two);
                slice.ratio_sums.push((0.0, 0));
                slice.advantage.push(0);
                slice.eps.len() - 1
            }
        };
        slice.ratio_sums[slot].0 += ratio;
        slice.ratio_sums[slot].1 += 1;
        if ratio < 1.0 {
            slice.advantage[slot] += 1;
        }
    }

    let mut derived = Vec::new();
    for s in &slices {
        let mut points: Vec<(f64, f64, f64)> = s
            .eps
            .iter()
            .zip(&s.ratio_sums)
            .zip(&s.advantage)
            .map(|((&e, &(sum, k)), &adv)| (e, sum / k as f64, adv as f64 / k as f64))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        // linear interpolation of the first mean-ratio crossing of 1
        let mut threshold = None;
        for w in points.windows(2) {
            let ((e0, r0, _), (e1, r1, _)) = (w[0], w[1]);
            if r0 < 1.0 && r1 >= 1.0 {
                threshold = Some(e0 + (1.0 - r0) / (r1 - r0) * (e1 - e0));
                break;
            }
        }
        derived.push(serde_json::json!({
            "n_qubits": s.n,
            "depth": s.depth,
            "global_rate": s.global.unwrap_or(0.0),
            "points": points
                .iter()
                .map(|&(e, r, a)| serde_json::json!({
                    "eps_two": e,
                    "mean_ratio": r,
                    "advantage_fraction": a,
                }))
                .collect::<Vec<_>>(),
            "threshold_eps_two": threshold,
        }));
    }
    Ok(Outcome {
        table,
        extra_csv: vec![],
        failures,
        derived: serde_json::json!({ "threshold": derived }),
    })
}

/// Depth-scaling exponent as a function of qubit count: the deep-circuit
/// sweep repeated per width, local noise only, with one power-law fit per
/// width in the derived output.
pub fn alpha_vs_nq(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<Outcome> {
    let eps_two = cfg.eps_two[0];
    let mut jobs = Vec::new();
    for &n in &cfg.n_qubits {
        for &depth in &cfg.depths {
            for seed in cfg.seeds() {
                jobs.push((
                    PipelinePoint {
                        n,
                        depth,
                        eps_two,
                        global: None,
                    },
                    seed,
                ));
            }
        }
    }
    let run = |(p, seed): &(PipelinePoint, u64)| run_point(cfg, p, *seed);
    let (ok, failures) =
        run_jobs(ctx.threads, &jobs, run, describe_point).map_err(anyhow::Error::msg)?;

    let mut table = ResultTable::new(TableSchema {
        point_cols: vec!["n_qubits", "depth"],
        sample_cols: vec![],
        value_cols: vec!["unmitigated", "mitigated"],
        statistic: Statistic::Arithmetic,
    });
    let mut samples = Vec::with_capacity(ok.len());
    for (i, (unmit, mit)) in &ok {
        let (p, seed) = &jobs[*i];
        table.push_sample(
            vec![p.n.to_string(), p.depth.to_string()],
            *seed,
            vec![],
            vec![*unmit, *mit],
        );
        samples.push((p, (*unmit, *mit)));
    }

    let mut fits = Vec::new();
    for &n in &cfg.n_qubits {
        if let Some(fit) = scaling_fit(&samples, |p| p.n == n, |p| p.depth as f64) {
            fits.push(serde_json::json!({ "n_qubits": n, "fit": fit }));
        }
    }
    Ok(Outcome {
        table,
        extra_csv: vec![],
        failures,
        derived: serde_json::json!({ "alpha_vs_n_qubits": fits }),
    })
}
