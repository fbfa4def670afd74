//! Circuit specifications: random test-circuit generation, noise attachment,
//! partitioning, and compilation into MPOs or dense superoperators.
//!
//! The test-circuit family alternates layers of nearest-neighbor CNOTs with
//! layers of single-qubit gates drawn from {Z, H, S, T}. Every gate may carry
//! a noise channel sampled from a [`NoiseProfile`], and layers may be
//! followed by correlated depolarizing noise across the whole register.
//! Specs are plain data: compilation to an MPO, a dense superoperator, or a
//! dense state evolution are pure functions of a spec.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{
    cnot_superop, gate1_superop, global_depolarizing_mpo, make_noise_superop, sample_rate, Gate1,
    NoiseKind,
};
use crate::decomp::{TruncationConfig, TruncationReport};
use crate::dense::{DenseState, DenseSuperOp};
use crate::error::{Error, Result};
use crate::mpo::{apply_mpo_layer, layer_from_local_ops, Mpo};
use crate::rng::rng_for;

/// RNG stream label for circuit generation (gates, families, rates).
const STREAM_GENERATE: u64 = 1;

/// One concrete noise attachment: a channel family and its sampled rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseOp {
    pub kind: NoiseKind,
    pub rate: f64,
}

/// CNOT on adjacent qubits; control is the lower (more significant) index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitGate {
    pub control: usize,
    pub target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseOp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleQubitGate {
    pub qubit: usize,
    pub gate: Gate1,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseOp>,
}

/// One circuit layer. `global_noise` is the rate of a correlated
/// depolarizing channel applied across all qubits after the layer's gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    TwoQubit {
        gates: Vec<TwoQubitGate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        global_noise: Option<f64>,
    },
    SingleQubit {
        gates: Vec<SingleQubitGate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        global_noise: Option<f64>,
    },
}

impl LayerSpec {
    pub fn global_noise(&self) -> Option<f64> {
        match self {
            LayerSpec::TwoQubit { global_noise, .. }
            | LayerSpec::SingleQubit { global_noise, .. } => *global_noise,
        }
    }

    pub fn set_global_noise(&mut self, rate: Option<f64>) {
        match self {
            LayerSpec::TwoQubit { global_noise, .. }
            | LayerSpec::SingleQubit { global_noise, .. } => *global_noise = rate,
        }
    }
}

/// How the circuit splits into parts for mitigation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub parts: usize,
    pub layers_per_part: usize,
}

/// A complete circuit: layer list plus the seed that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    pub layers: Vec<LayerSpec>,
}

/// Where CNOT pairs sit in successive two-qubit layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Every two-qubit layer pairs (0,1), (2,3), …
    Aligned,
    /// Alternating two-qubit layers shift the pairing by one qubit
    /// (brickwork).
    Staggered,
}

/// Which noise family gates draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    Fixed(NoiseKind),
    /// Uniform random choice among the four families, per gate.
    Mixed,
}

/// Correlated depolarizing noise schedule: applied after every
/// `every_layers`-th layer at the given fixed rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalNoiseSpec {
    pub rate: f64,
    pub every_layers: usize,
}

/// Recipe for attaching noise during circuit generation. Mean rates:
/// two-qubit gates use `eps_two`, single-qubit gates `eps_one`
/// (default `eps_two / 10`); each gate's concrete rate is drawn uniformly
/// from ±20% around the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub family: NoiseFamily,
    pub eps_two: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_one: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global: Option<GlobalNoiseSpec>,
    #[serde(default = "default_placement")]
    pub placement: Placement,
}

fn default_placement() -> Placement {
    Placement::Staggered
}

impl NoiseProfile {
    pub fn noiseless() -> Self {
        Self {
            family: NoiseFamily::Mixed,
            eps_two: 0.0,
            eps_one: None,
            global: None,
            placement: Placement::Staggered,
        }
    }

    /// All gates carry the same noise family at mean rate `eps_two`
    /// (singles at `eps_two / 10`).
    pub fn uniform(kind: NoiseKind, eps_two: f64) -> Self {
        Self {
            family: NoiseFamily::Fixed(kind),
            ..Self::noiseless()
        }
        .with_eps_two(eps_two)
    }

    /// Noise family chosen uniformly at random per gate.
    pub fn mixed(eps_two: f64) -> Self {
        Self {
            family: NoiseFamily::Mixed,
            ..Self::noiseless()
        }
        .with_eps_two(eps_two)
    }

    pub fn with_eps_two(mut self, eps_two: f64) -> Self {
        self.eps_two = eps_two;
        self
    }

    pub fn with_eps_one(mut self, eps_one: f64) -> Self {
        self.eps_one = Some(eps_one);
        self
    }

    pub fn with_global(mut self, rate: f64, every_layers: usize) -> Self {
        self.global = Some(GlobalNoiseSpec { rate, every_layers });
        self
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    pub fn effective_eps_one(&self) -> f64 {
        self.eps_one.unwrap_or(self.eps_two / 10.0)
    }
}

const LOCAL_FAMILIES: [NoiseKind; 4] = [
    NoiseKind::Depolarizing,
    NoiseKind::Dephasing,
    NoiseKind::BitFlip,
    NoiseKind::AmplitudeDamping,
];

fn draw_noise<R: Rng>(rng: &mut R, family: NoiseFamily, mean: f64) -> Option<NoiseOp> {
    if mean == 0.0 {
        return None;
    }
    let kind = match family {
        NoiseFamily::Fixed(k) => k,
        NoiseFamily::Mixed => LOCAL_FAMILIES[rng.gen_range(0..4)],
    };
    Some(NoiseOp {
        kind,
        rate: sample_rate(mean, rng),
    })
}

/// Generates the random benchmark circuit: even-numbered layers are
/// nearest-neighbor CNOTs (staggered or aligned per the profile), odd ones
/// are random single-qubit gates. All randomness derives from `seed`.
pub fn generate_test_circuit(
    n_qubits: usize,
    depth: usize,
    seed: u64,
    profile: &NoiseProfile,
) -> Result<CircuitSpec> {
    if depth == 0 {
        return Err(Error::InvalidCircuit("depth must be at least 1".into()));
    }
    if n_qubits < 2 || n_qubits % 2 != 0 {
        return Err(Error::InvalidCircuit(format!(
            "CNOT layers need an even number of qubits ≥ 2, got {n_qubits}"
        )));
    }
    let mut rng = rng_for(seed, STREAM_GENERATE);
    let eps_one = profile.effective_eps_one();
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let mut layer = if l % 2 == 0 {
            let two_qubit_index = l / 2;
            let offset = match profile.placement {
                Placement::Aligned => 0,
                Placement::Staggered => two_qubit_index % 2,
            };
            let mut gates = Vec::new();
            let mut q = offset;
            while q + 1 < n_qubits {
                gates.push(TwoQubitGate {
                    control: q,
                    target: q + 1,
                    noise: draw_noise(&mut rng, profile.family, profile.eps_two),
                });
                q += 2;
            }
            LayerSpec::TwoQubit {
                gates,
                global_noise: None,
            }
        } else {
            let gates = (0..n_qubits)
                .map(|q| SingleQubitGate {
                    qubit: q,
                    gate: [Gate1::Z, Gate1::H, Gate1::S, Gate1::T][rng.gen_range(0..4)],
                    noise: draw_noise(&mut rng, profile.family, eps_one),
                })
                .collect();
            LayerSpec::SingleQubit {
                gates,
                global_noise: None,
            }
        };
        if let Some(g) = profile.global {
            if g.every_layers > 0 && (l + 1) % g.every_layers == 0 && g.rate > 0.0 {
                layer.set_global_noise(Some(g.rate));
            }
        }
        layers.push(layer);
    }
    Ok(CircuitSpec {
        n_qubits,
        seed,
        partition: None,
        layers,
    })
}

impl CircuitSpec {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Structural checks: qubit indices in range, CNOTs on adjacent qubits
    /// with control below target, no overlapping gates within a layer, and a
    /// partition (if any) consistent with the layer count.
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::InvalidCircuit("circuit needs at least 1 qubit".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let mut used = vec![false; self.n_qubits];
            let mut mark = |q: usize| -> Result<()> {
                if q >= self.n_qubits {
                    return Err(Error::InvalidCircuit(format!(
                        "layer {l}: qubit {q} out of range"
                    )));
                }
                if used[q] {
                    return Err(Error::InvalidCircuit(format!(
                        "layer {l}: qubit {q} acted on twice"
                    )));
                }
                used[q] = true;
                Ok(())
            };
            match layer {
                LayerSpec::TwoQubit { gates, .. } => {
                    for g in gates {
                        if g.target != g.control + 1 {
                            return Err(Error::InvalidCircuit(format!(
                                "layer {l}: CNOT {}→{} is not an adjacent \
                                 control-below-target pair",
                                g.control, g.target
                            )));
                        }
                        mark(g.control)?;
                        mark(g.target)?;
                    }
                }
                LayerSpec::SingleQubit { gates, .. } => {
                    for g in gates {
                        mark(g.qubit)?;
                    }
                }
            }
            if let Some(r) = layer.global_noise() {
                let max = crate::channels::global_depolarizing_max_rate(self.n_qubits);
                if !(0.0..=max).contains(&r) {
                    return Err(Error::RateOutOfRange {
                        kind: "correlated depolarizing",
                        rate: r,
                        max,
                    });
                }
            }
        }
        if let Some(p) = self.partition {
            if p.parts == 0 || p.parts * p.layers_per_part != self.layers.len() {
                return Err(Error::InvalidCircuit(format!(
                    "partition {}×{} does not cover {} layers",
                    p.parts,
                    p.layers_per_part,
                    self.layers.len()
                )));
            }
        }
        Ok(())
    }

    pub fn with_partition(mut self, parts: usize, layers_per_part: usize) -> Self {
        self.partition = Some(PartitionSpec {
            parts,
            layers_per_part,
        });
        self
    }

    /// Splits the circuit into its parts. Each part is a standalone spec
    /// carrying its share of layers (noise attachments included); the
    /// concatenation of the parts reproduces the original layer list.
    pub fn split_into_parts(&self) -> Result<Vec<CircuitSpec>> {
        self.validate()?;
        let p = self.partition.ok_or_else(|| {
            Error::InvalidCircuit("circuit has no partition to split by".into())
        })?;
        Ok(self
            .layers
            .chunks(p.layers_per_part)
            .map(|chunk| CircuitSpec {
                n_qubits: self.n_qubits,
                seed: self.seed,
                partition: None,
                layers: chunk.to_vec(),
            })
            .collect())
    }

    /// The same circuit with every per-gate noise channel removed but any
    /// global layers kept. Models a mitigation scheme that corrects each
    /// gate's local noise perfectly while leaving correlated noise behind:
    /// the distance of this circuit from the ideal one is the floor such a
    /// scheme cannot beat.
    pub fn without_local_noise(&self) -> CircuitSpec {
        let mut spec = self.clone();
        for layer in &mut spec.layers {
            match layer {
                LayerSpec::TwoQubit { gates, .. } => {
                    for g in gates {
                        g.noise = None;
                    }
                }
                LayerSpec::SingleQubit { gates, .. } => {
                    for g in gates {
                        g.noise = None;
                    }
                }
            }
        }
        spec
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let spec: CircuitSpec =
            toml::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Local superoperators for one layer's gates, ready for
/// [`layer_from_local_ops`]: `(start_site, 4×4 or 16×16 matrix)`. Noise
/// channels are composed after their gate when `noisy` is set; the layer's
/// global noise is *not* included (it is a separate bond-2 MPO factor).
pub fn layer_local_ops(layer: &LayerSpec, noisy: bool) -> Result<Vec<(usize, Array2<C64>)>> {
    let mut ops = Vec::new();
    match layer {
        LayerSpec::TwoQubit { gates, .. } => {
            for g in gates {
                let mut op = cnot_superop().matrix().clone();
                if noisy {
                    if let Some(nz) = g.noise {
                        op = make_noise_superop(nz.kind, 2, nz.rate)?.matrix().dot(&op);
                    }
                }
                ops.push((g.control, op));
            }
        }
        LayerSpec::SingleQubit { gates, .. } => {
            for g in gates {
                let mut op = gate1_superop(g.gate).matrix().clone();
                if noisy {
                    if let Some(nz) = g.noise {
                        op = make_noise_superop(nz.kind, 1, nz.rate)?.matrix().dot(&op);
                    }
                }
                ops.push((g.qubit, op));
            }
        }
    }
    Ok(ops)
}

/// The sequence of MPO factors a circuit contracts to, in application order.
/// Each layer yields its gate MPO; when `noisy` is set, gates carry their
/// noise channels and global-noise layers contribute an extra bond-2 MPO.
pub fn layer_mpos(spec: &CircuitSpec, noisy: bool) -> Result<Vec<Mpo>> {
    spec.validate()?;
    let mut out = Vec::new();
    for layer in &spec.layers {
        let ops = layer_local_ops(layer, noisy)?;
        out.push(layer_from_local_ops(spec.n_qubits, &ops)?);
        if noisy {
            if let Some(rate) = layer.global_noise() {
                out.push(global_depolarizing_mpo(spec.n_qubits, rate)?);
            }
        }
    }
    Ok(out)
}

fn compile_mpo(spec: &CircuitSpec, noisy: bool, cfg: &TruncationConfig) -> Result<(Mpo, TruncationReport)> {
    let mut acc = Mpo::identity(spec.n_qubits)?;
    let mut report = TruncationReport::default();
    for layer in layer_mpos(spec, noisy)? {
        let (next, rep) = apply_mpo_layer(&acc, &layer, cfg)?;
        acc = next;
        report.absorb(&rep);
    }
    report.max_bond_after = acc.max_bond();
    Ok((acc, report))
}

/// Contracts the noise-stripped circuit into an MPO.
pub fn compile_ideal_mpo(spec: &CircuitSpec, cfg: &TruncationConfig) -> Result<Mpo> {
    Ok(compile_mpo(spec, false, cfg)?.0)
}

/// Contracts the full noisy circuit into an MPO, reporting truncation loss.
pub fn compile_noisy_mpo(
    spec: &CircuitSpec,
    cfg: &TruncationConfig,
) -> Result<(Mpo, TruncationReport)> {
    compile_mpo(spec, true, cfg)
}

/// Dense reference compilation (small systems): the exact superoperator of
/// the circuit, with or without its noise.
pub fn compile_dense(spec: &CircuitSpec, noisy: bool) -> Result<DenseSuperOp> {
    spec.validate()?;
    let mut acc = DenseSuperOp::identity(spec.n_qubits)?;
    for layer in &spec.layers {
        for (site, op) in layer_local_ops(layer, noisy)? {
            acc.apply_local(&op, site)?;
        }
        if noisy {
            if let Some(rate) = layer.global_noise() {
                acc.apply_global_depolarizing(rate)?;
            }
        }
    }
    Ok(acc)
}

/// Applies one layer (gates, then optional global noise) to a dense
/// vectorized state in place.
pub fn apply_layer_dense_state(
    state: &mut DenseState,
    layer: &LayerSpec,
    noisy: bool,
) -> Result<()> {
    for (site, op) in layer_local_ops(layer, noisy)? {
        state.apply_local(&op, site)?;
    }
    if noisy {
        if let Some(rate) = layer.global_noise() {
            state.apply_global_depolarizing(rate)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{relative_distance, relative_distance_state};

    fn unlimited() -> TruncationConfig {
        TruncationConfig::default()
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        let profile = NoiseProfile::mixed(0.01).with_global(0.05, 2);
        let a = generate_test_circuit(6, 5, 42, &profile).unwrap();
        let b = generate_test_circuit(6, 5, 42, &profile).unwrap();
        let c = generate_test_circuit(6, 5, 43, &profile).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn layer_pattern_alternates_starting_with_cnots() {
        let spec = generate_test_circuit(4, 4, 7, &NoiseProfile::noiseless()).unwrap();
        assert_eq!(spec.depth(), 4);
        for (l, layer) in spec.layers.iter().enumerate() {
            match layer {
                LayerSpec::TwoQubit { gates, .. } => {
                    assert_eq!(l % 2, 0);
                    // staggered: offset-0 layers pair all 4 qubits, offset-1
                    // layers only the middle pair
                    let expect = if gates[0].control == 0 { 2 } else { 1 };
                    assert_eq!(gates.len(), expect);
                    for g in gates {
                        assert_eq!(g.target, g.control + 1);
                    }
                }
                LayerSpec::SingleQubit { gates, .. } => {
                    assert_eq!(l % 2, 1);
                    assert_eq!(gates.len(), 4);
                }
            }
        }
    }

    #[test]
    fn staggered_layers_alternate_offsets() {
        let spec = generate_test_circuit(6, 8, 3, &NoiseProfile::noiseless()).unwrap();
        let offsets: Vec<usize> = spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::TwoQubit { gates, .. } => Some(gates[0].control),
                _ => None,
            })
            .collect();
        assert_eq!(offsets, vec![0, 1, 0, 1]);
        let aligned = generate_test_circuit(
            6,
            8,
            3,
            &NoiseProfile::noiseless().with_placement(Placement::Aligned),
        )
        .unwrap();
        for layer in &aligned.layers {
            if let LayerSpec::TwoQubit { gates, .. } = layer {
                assert_eq!(gates[0].control, 0);
                assert_eq!(gates.len(), 3);
            }
        }
    }

    #[test]
    fn sampled_rates_stay_within_twenty_percent() {
        let spec = generate_test_circuit(6, 6, 9, &NoiseProfile::mixed(0.01)).unwrap();
        let mut seen = 0;
        for layer in &spec.layers {
            let check = |noise: Option<NoiseOp>, mean: f64| {
                let nz = noise.expect("every gate carries noise");
                assert!(nz.rate >= 0.8 * mean && nz.rate <= 1.2 * mean);
            };
            match layer {
                LayerSpec::TwoQubit { gates, .. } => {
                    for g in gates {
                        check(g.noise, 0.01);
                        seen += 1;
                    }
                }
                LayerSpec::SingleQubit { gates, .. } => {
                    for g in gates {
                        check(g.noise, 0.001);
                        seen += 1;
                    }
                }
            }
        }
        assert!(seen > 10);
    }

    #[test]
    fn rejects_odd_qubit_counts() {
        assert!(generate_test_circuit(5, 4, 0, &NoiseProfile::noiseless()).is_err());
        assert!(generate_test_circuit(4, 0, 0, &NoiseProfile::noiseless()).is_err());
    }

    #[test]
    fn ideal_depth_four_circuit_has_bond_four() {
        let spec = generate_test_circuit(10, 4, 11, &NoiseProfile::noiseless()).unwrap();
        let mpo = compile_ideal_mpo(&spec, &unlimited()).unwrap();
        assert_eq!(mpo.max_bond(), 4);
    }

    #[test]
    fn aligned_placement_never_couples_pairs() {
        // aligned two-qubit layers keep disjoint pairs forever: odd cuts stay
        // at bond 1 and intra-pair cuts cap at 16 (the full superoperator
        // Schmidt rank of a generic two-qubit unitary), at any depth
        let spec = generate_test_circuit(
            6,
            8,
            2,
            &NoiseProfile::noiseless().with_placement(Placement::Aligned),
        )
        .unwrap();
        let mpo = compile_ideal_mpo(&spec, &unlimited()).unwrap();
        let bonds = mpo.bond_dims();
        assert_eq!(bonds[1], 1);
        assert_eq!(bonds[3], 1);
        assert!(mpo.max_bond() <= 16);
    }

    #[test]
    fn noisy_compile_matches_dense_oracle() {
        for seed in [1u64, 2, 3] {
            let profile = NoiseProfile::mixed(0.02).with_global(0.03, 2);
            let spec = generate_test_circuit(4, 4, seed, &profile).unwrap();
            let (mpo, report) = compile_noisy_mpo(&spec, &unlimited()).unwrap();
            assert!(report.total_discarded() < 1e-24);
            let dense = compile_dense(&spec, true).unwrap();
            let d = relative_distance(&mpo.to_dense().unwrap(), &dense).unwrap();
            assert!(d < 1e-20, "seed {seed}: distance {d}");
        }
    }

    #[test]
    fn ideal_compile_matches_dense_oracle_and_is_unitary() {
        let spec = generate_test_circuit(4, 5, 21, &NoiseProfile::mixed(0.05)).unwrap();
        let mpo = compile_ideal_mpo(&spec, &unlimited()).unwrap();
        let dense = compile_dense(&spec, false).unwrap();
        let d = relative_distance(&mpo.to_dense().unwrap(), &dense).unwrap();
        assert!(d < 1e-20, "distance {d}");
        // ideal superoperator is unitary: U†U = 1
        let ident = dense.dagger().compose(&dense).unwrap();
        let eye = DenseSuperOp::identity(4).unwrap();
        assert!(relative_distance(&ident, &eye).unwrap() < 1e-24);
    }

    #[test]
    fn zero_rates_collapse_to_ideal_compile() {
        let spec = generate_test_circuit(4, 4, 5, &NoiseProfile::mixed(0.0)).unwrap();
        let (noisy, _) = compile_noisy_mpo(&spec, &unlimited()).unwrap();
        let ideal = compile_ideal_mpo(&spec, &unlimited()).unwrap();
        assert!(crate::mpo::relative_distance_mpo(&noisy, &ideal).unwrap() < 1e-24);
    }

    #[test]
    fn partition_concatenation_reproduces_circuit() {
        let profile = NoiseProfile::uniform(NoiseKind::Depolarizing, 0.01).with_global(0.05, 4);
        let spec = generate_test_circuit(4, 8, 13, &profile)
            .unwrap()
            .with_partition(2, 4);
        let parts = spec.split_into_parts().unwrap();
        assert_eq!(parts.len(), 2);
        let rejoined: Vec<LayerSpec> = parts
            .iter()
            .flat_map(|p| p.layers.clone())
            .collect();
        assert_eq!(rejoined, spec.layers);
        // every part ends with the per-part global noise
        for p in &parts {
            assert_eq!(p.layers.last().unwrap().global_noise(), Some(0.05));
        }
        // dense composition of parts equals the whole
        let whole = compile_dense(&spec, true).unwrap();
        let mut acc = DenseSuperOp::identity(4).unwrap();
        for p in &parts {
            acc = compile_dense(p, true).unwrap().compose(&acc).unwrap();
        }
        assert!(relative_distance(&acc, &whole).unwrap() < 1e-24);
    }

    #[test]
    fn partition_must_cover_all_layers() {
        let spec = generate_test_circuit(4, 6, 1, &NoiseProfile::noiseless())
            .unwrap()
            .with_partition(2, 4);
        assert!(spec.split_into_parts().is_err());
    }

    #[test]
    fn stripping_local_noise_keeps_gates_and_global_layers() {
        let profile = NoiseProfile::mixed(0.01).with_global(0.05, 2);
        let spec = generate_test_circuit(4, 4, 23, &profile).unwrap();
        let stripped = spec.without_local_noise();
        for layer in &stripped.layers {
            match layer {
                LayerSpec::TwoQubit { gates, .. } => {
                    assert!(gates.iter().all(|g| g.noise.is_none()))
                }
                LayerSpec::SingleQubit { gates, .. } => {
                    assert!(gates.iter().all(|g| g.noise.is_none()))
                }
            }
        }
        let rates: Vec<Option<f64>> =
            stripped.layers.iter().map(|l| l.global_noise()).collect();
        assert_eq!(rates, vec![None, Some(0.05), None, Some(0.05)]);
        // same gate content: the ideal compiles agree exactly
        let a = compile_dense(&spec, false).unwrap();
        let b = compile_dense(&stripped, false).unwrap();
        assert!(relative_distance(&a, &b).unwrap() < 1e-30);
        // and only the global channels remain in the noisy compile
        let noisy = compile_dense(&stripped, true).unwrap();
        assert!(relative_distance(&noisy, &a).unwrap() > 1e-4);
    }

    #[test]
    fn toml_round_trip_preserves_spec() {
        let profile = NoiseProfile::mixed(0.01).with_global(0.05, 2);
        let spec = generate_test_circuit(4, 4, 99, &profile)
            .unwrap()
            .with_partition(1, 4);
        let text = spec.to_toml().unwrap();
        let back = CircuitSpec::from_toml(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn dense_state_layer_application_matches_superop() {
        let profile = NoiseProfile::mixed(0.02).with_global(0.04, 1);
        let spec = generate_test_circuit(4, 3, 31, &profile).unwrap();
        let mut state = DenseState::product_zero(4).unwrap();
        for layer in &spec.layers {
            apply_layer_dense_state(&mut state, layer, true).unwrap();
        }
        let superop = compile_dense(&spec, true).unwrap();
        let expect = superop.apply(&DenseState::product_zero(4).unwrap()).unwrap();
        assert!(relative_distance_state(&state, &expect).unwrap() < 1e-24);
    }

    #[test]
    fn global_noise_attaches_on_schedule() {
        let profile = NoiseProfile::mixed(0.01).with_global(0.05, 4);
        let spec = generate_test_circuit(4, 8, 17, &profile).unwrap();
        let rates: Vec<Option<f64>> = spec.layers.iter().map(|l| l.global_noise()).collect();
        assert_eq!(
            rates,
            vec![None, None, None, Some(0.05), None, None, None, Some(0.05)]
        );
    }
}
