//! The five-step error-mitigation pipeline.
//!
//! A partitioned circuit is processed part by part: compile the noisy part
//! as an MPO, fit its variational inverse, contract the ideal part against
//! that inverse to isolate an inverse noise channel `E⁻¹ = U⁰ ∘ U⁻¹`, and
//! compress it to bond `D′`. At `D′ = 1` the compressed channel factorizes
//! into per-qubit maps that slot into the circuit as one extra gate layer
//! per part boundary — optionally carrying their own noise, since real
//! correction gates are imperfect too. Finally the ideal, noisy, and
//! corrected circuits are run as vectorized-density-matrix MPS simulations
//! and compared through Frobenius distances.
//!
//! Correction maps are applied as general linear maps: an inverse noise
//! channel is not completely positive, and realizing it physically (e.g.
//! by quasi-probability sampling) is outside this crate's scope.

use std::time::Instant;

use crate::channels::{make_noise_superop, sample_rate, NoiseKind};
use crate::circuit::{compile_ideal_mpo, compile_noisy_mpo, layer_mpos, CircuitSpec};
use crate::decomp::{TruncationConfig, TruncationReport};
use crate::error::{Error, Result};
use crate::inverse::{mpo_inverse, InverseConfig, InverseReport};
use crate::mpo::{apply_mpo_layer, relative_distance_mpo, Mpo};
use crate::mps::{apply_mpo_to_mps, VecStateMps};
use crate::rng::rng_for;
use ndarray::Array4;
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Random-number stream for sampling correction-gate noise rates.
const STREAM_CORRECTION: u64 = 21;

/// Allowed cumulative trace drift across trace-preserving layers during
/// state simulation.
pub const TRACE_DRIFT_BUDGET: f64 = 1e-6;

/// Inverse noise channel of one circuit part, compressed to bond `d_prime`,
/// together with how it was obtained.
#[derive(Debug, Clone)]
pub struct NoiseInverse {
    pub part_index: usize,
    /// `E⁻¹ = U⁰ ∘ U⁻¹`, truncated to the correction bond dimension.
    pub mpo: Mpo,
    /// Bond dimension the variational inverse was fitted at.
    pub d_inv: usize,
    pub inverse_report: InverseReport,
    pub truncation: TruncationReport,
}

/// Noise model attached to correction gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionNoiseSpec {
    pub kind: NoiseKind,
    /// Mean error rate; per-site rates are resampled uniformly from
    /// ±20% around it, like circuit-gate noise.
    pub rate: f64,
}

/// State-simulation knobs. The input state is always the vectorized
/// product `|0…0⟩⟨0…0|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSimConfig {
    /// Bond cap for the density-matrix MPS.
    pub chi: usize,
    pub cutoff: f64,
}

impl Default for StateSimConfig {
    fn default() -> Self {
        Self {
            chi: 64,
            cutoff: 1e-14,
        }
    }
}

impl StateSimConfig {
    pub fn with_chi(chi: usize) -> Self {
        Self {
            chi,
            ..Self::default()
        }
    }

    fn truncation(&self) -> TruncationConfig {
        TruncationConfig {
            max_bond: Some(self.chi),
            cutoff: self.cutoff,
        }
    }
}

/// Everything [`run_pipeline`] needs besides the circuit itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Bond cap while absorbing noisy layers into each part's MPO.
    pub compile_bond: usize,
    /// Variational-inverse settings (bond dimension, sweeps, tolerance).
    pub inverse: InverseConfig,
    /// Bond the extracted inverse noise channel is compressed to.
    pub d_prime: usize,
    pub state_sim: StateSimConfig,
    /// Noise on the correction gates themselves; requires `d_prime = 1`.
    pub correction_noise: Option<CorrectionNoiseSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            compile_bond: 5,
            inverse: InverseConfig::default(),
            d_prime: 4,
            state_sim: StateSimConfig::default(),
            correction_noise: None,
        }
    }
}

/// Per-part numbers recorded during a pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartDiagnostics {
    pub part_index: usize,
    /// Bond of the compiled noisy part.
    pub noisy_bond: usize,
    /// Normalized residual of the fitted inverse.
    pub inverse_error: f64,
    pub inverse_converged: bool,
    pub inverse_sweeps: usize,
    /// Bond of the compressed inverse noise channel (≤ D′).
    pub correction_bond: usize,
    /// Channel-level distance D(U, U⁰) of the noisy part.
    pub channel_distance_raw: f64,
    /// Channel-level distance D(E⁻¹ ∘ U, U⁰) after correction.
    pub channel_distance_corrected: f64,
}

/// Outcome of one pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QemRunRecord {
    pub n_qubits: usize,
    pub depth: usize,
    pub n_parts: usize,
    pub seed: u64,
    pub config: PipelineConfig,
    /// State distance D(ρ, ρ⁰) without mitigation.
    pub unmitigated_distance: f64,
    /// State distance D(ρ_mit, ρ⁰) with correction layers inserted.
    pub mitigated_distance: f64,
    pub parts: Vec<PartDiagnostics>,
    pub wall_seconds: f64,
}

impl QemRunRecord {
    /// Column names for [`Self::csv_row`].
    pub fn csv_header() -> &'static str {
        "n_qubits,depth,n_parts,seed,d_inv,d_prime,chi_s,unmitigated,mitigated,wall_seconds"
    }

    /// The record's headline numbers as one CSV row.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.12e},{:.12e},{:.3}",
            self.n_qubits,
            self.depth,
            self.n_parts,
            self.seed,
            self.config.inverse.bond_dim,
            self.config.d_prime,
            self.config.state_sim.chi,
            self.unmitigated_distance,
            self.mitigated_distance,
            self.wall_seconds
        )
    }
}

/// Contracts an ideal part against the fitted inverse of its noisy
/// counterpart and compresses the product: `E⁻¹ = U⁰ ∘ U⁻¹` at bond
/// `d_prime`. For a noiseless part the product collapses to the identity.
pub fn noise_inverse(
    part_ideal: &Mpo,
    part_inverse: &Mpo,
    d_prime: usize,
) -> Result<(Mpo, TruncationReport)> {
    if d_prime == 0 {
        return Err(Error::InvalidConfig(
            "inverse noise channel bond must be at least 1".into(),
        ));
    }
    apply_mpo_layer(
        part_inverse,
        part_ideal,
        &TruncationConfig::with_max_bond(d_prime),
    )
}

/// Turns an inverse noise channel into an insertable correction layer.
///
/// Without a noise model the channel is used as-is. With one, the channel
/// must factorize into per-qubit maps (bond 1): each factor is followed by
/// a freshly sampled single-qubit noise channel, modeling imperfect
/// correction gates.
pub fn correction_layer<R: Rng + ?Sized>(
    ni: &NoiseInverse,
    correction_noise: Option<CorrectionNoiseSpec>,
    rng: &mut R,
) -> Result<Mpo> {
    let Some(noise) = correction_noise else {
        return Ok(ni.mpo.clone());
    };
    if ni.mpo.max_bond() > 1 {
        return Err(Error::InvalidConfig(format!(
            "noisy corrections need a product-form channel, bond is {}",
            ni.mpo.max_bond()
        )));
    }
    let mut sites = Vec::with_capacity(ni.mpo.n_sites());
    for s in ni.mpo.sites() {
        let mut local = ndarray::Array2::<C64>::zeros((4, 4));
        for t in 0..4 {
            for g in 0..4 {
                local[[t, g]] = s[[0, 0, t, g]];
            }
        }
        let rate = sample_rate(noise.rate, rng);
        let noisy = make_noise_superop(noise.kind, 1, rate)?.matrix().dot(&local);
        let mut site = Array4::<C64>::zeros((1, 1, 4, 4));
        for t in 0..4 {
            for g in 0..4 {
                site[[0, 0, t, g]] = noisy[[t, g]];
            }
        }
        sites.push(site);
    }
    Mpo::from_sites(sites)
}

/// One layer of a state simulation.
#[derive(Debug, Clone)]
pub enum SimLayer {
    /// A circuit layer (gates plus their noise channels): trace preserving
    /// by construction, so simulation truncation is the only thing that
    /// can move the trace across it.
    Channel(Mpo),
    /// A correction layer: a general linear map that may legitimately
    /// change the trace, exempt from the drift budget.
    Correction(Mpo),
}

impl SimLayer {
    fn mpo(&self) -> &Mpo {
        match self {
            SimLayer::Channel(m) | SimLayer::Correction(m) => m,
        }
    }
}

/// Evolves `|0…0⟩⟨0…0|` through the given layers with bond-capped MPS
/// arithmetic.
///
/// The cumulative trace drift across trace-preserving layers is held to
/// [`TRACE_DRIFT_BUDGET`]; exceeding it aborts the run, since distances
/// computed from such a state would reflect the simulator rather than the
/// circuit.
pub fn simulate_state(
    n_qubits: usize,
    layers: &[SimLayer],
    sim: &StateSimConfig,
) -> Result<VecStateMps> {
    if sim.chi == 0 {
        return Err(Error::InvalidConfig(
            "state bond cap must be at least 1".into(),
        ));
    }
    let cfg = sim.truncation();
    let mut state = VecStateMps::zero_state(n_qubits)?;
    let mut drift = 0.0;
    for layer in layers {
        let before = state.trace()?;
        let (next, _) = apply_mpo_to_mps(&state, layer.mpo(), &cfg)?;
        state = next;
        if matches!(layer, SimLayer::Channel(_)) {
            let after = state.trace()?;
            drift += (after - before).norm();
            if drift > TRACE_DRIFT_BUDGET {
                return Err(Error::TraceDrift {
                    drift,
                    budget: TRACE_DRIFT_BUDGET,
                });
            }
        }
    }
    Ok(state)
}

/// Normalized squared Frobenius distance between two density-matrix MPS,
/// `‖ρ − ρ⁰‖²_F / √(‖ρ‖²_F ‖ρ⁰‖²_F)`, from three overlaps.
pub fn state_distance(rho: &VecStateMps, rho0: &VecStateMps) -> Result<f64> {
    let na = rho.norm_sq();
    let nb = rho0.norm_sq();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DimensionMismatch(
            "state distance undefined for zero-norm states".into(),
        ));
    }
    let cross = rho.overlap(rho0)?;
    Ok(((na + nb - 2.0 * cross.re) / (na * nb).sqrt()).max(0.0))
}

/// Runs the full mitigation pipeline on a partitioned circuit and returns
/// the ideal-vs-noisy and ideal-vs-mitigated state distances plus per-part
/// diagnostics.
pub fn run_pipeline(spec: &CircuitSpec, cfg: &PipelineConfig) -> Result<QemRunRecord> {
    let start = Instant::now();
    spec.validate()?;
    if spec.partition.is_none() {
        return Err(Error::InvalidCircuit(
            "pipeline needs a partitioned circuit".into(),
        ));
    }
    let parts = spec.split_into_parts()?;
    let exact = TruncationConfig::default();
    let mut corrections = Vec::with_capacity(parts.len());
    let mut diagnostics = Vec::with_capacity(parts.len());
    let mut rng = rng_for(spec.seed, STREAM_CORRECTION);
    for (k, part) in parts.iter().enumerate() {
        let ideal = compile_ideal_mpo(part, &exact)?;
        let (noisy, _) = compile_noisy_mpo(
            part,
            &TruncationConfig {
                max_bond: Some(cfg.compile_bond),
                ..TruncationConfig::default()
            },
        )?;
        let (inv, inverse_report) = mpo_inverse(&noisy, &cfg.inverse)?;
        let (e_inv, truncation) = noise_inverse(&ideal, &inv, cfg.d_prime)?;
        let (corrected, _) = apply_mpo_layer(&noisy, &e_inv, &exact)?;
        let diag = PartDiagnostics {
            part_index: k,
            noisy_bond: noisy.max_bond(),
            inverse_error: inverse_report.final_error,
            inverse_converged: inverse_report.converged,
            inverse_sweeps: inverse_report.sweeps_used,
            correction_bond: e_inv.max_bond(),
            channel_distance_raw: relative_distance_mpo(&noisy, &ideal)?,
            channel_distance_corrected: relative_distance_mpo(&corrected, &ideal)?,
        };
        let ni = NoiseInverse {
            part_index: k,
            mpo: e_inv,
            d_inv: cfg.inverse.bond_dim,
            inverse_report,
            truncation,
        };
        corrections.push(correction_layer(&ni, cfg.correction_noise, &mut rng)?);
        diagnostics.push(diag);
    }

    let mut ideal_layers = Vec::new();
    let mut noisy_layers = Vec::new();
    let mut mitigated_layers = Vec::new();
    for (part, correction) in parts.iter().zip(&corrections) {
        for m in layer_mpos(part, false)? {
            ideal_layers.push(SimLayer::Channel(m));
        }
        for m in layer_mpos(part, true)? {
            noisy_layers.push(SimLayer::Channel(m.clone()));
            mitigated_layers.push(SimLayer::Channel(m));
        }
        mitigated_layers.push(SimLayer::Correction(correction.clone()));
    }
    let rho_ideal = simulate_state(spec.n_qubits, &ideal_layers, &cfg.state_sim)?;
    let rho_noisy = simulate_state(spec.n_qubits, &noisy_layers, &cfg.state_sim)?;
    let rho_mitigated = simulate_state(spec.n_qubits, &mitigated_layers, &cfg.state_sim)?;

    Ok(QemRunRecord {
        n_qubits: spec.n_qubits,
        depth: spec.depth(),
        n_parts: parts.len(),
        seed: spec.seed,
        config: cfg.clone(),
        unmitigated_distance: state_distance(&rho_noisy, &rho_ideal)?,
        mitigated_distance: state_distance(&rho_mitigated, &rho_ideal)?,
        parts: diagnostics,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
