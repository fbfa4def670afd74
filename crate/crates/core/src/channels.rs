//! Gate and noise channels as local superoperators.
//!
//! Gates are the Clifford+T set {Z, H, S, T} plus CNOT. Noise channels come in
//! four families, each with a single-site and a two-site variant, plus a
//! correlated depolarizing channel spanning all qubits at once. Every
//! constructor returns the channel in the grouped vectorized basis of
//! [`crate::dense`], ready to be embedded locally or split into MPO site
//! tensors.

use ndarray::{array, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dense::{kron as kron2, superop_from_kraus, DenseSuperOp};
use crate::error::{Error, Result};
use crate::mpo::Mpo;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Single-qubit gate alphabet used by the test circuits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate1 {
    Z,
    H,
    S,
    T,
}

impl Gate1 {
    /// 2×2 unitary matrix.
    pub fn matrix(self) -> Array2<C64> {
        match self {
            Gate1::Z => array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]],
            Gate1::H => {
                let s = 1.0 / 2f64.sqrt();
                array![[c(s, 0.), c(s, 0.)], [c(s, 0.), c(-s, 0.)]]
            }
            Gate1::S => array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c(0., 1.)]],
            Gate1::T => {
                let p = std::f64::consts::FRAC_PI_4;
                array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c(p.cos(), p.sin())]]
            }
        }
    }

    pub const ALL: [Gate1; 4] = [Gate1::Z, Gate1::H, Gate1::S, Gate1::T];
}

/// 4×4 CNOT unitary; the first (more significant) qubit is the control.
pub fn cnot_matrix() -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((4, 4));
    m[[0, 0]] = c(1., 0.);
    m[[1, 1]] = c(1., 0.);
    m[[2, 3]] = c(1., 0.);
    m[[3, 2]] = c(1., 0.);
    m
}

/// Superoperator of a single-qubit gate (4×4).
pub fn gate1_superop(g: Gate1) -> DenseSuperOp {
    superop_from_kraus(&[g.matrix()]).expect("unitary Kraus list is valid")
}

/// Superoperator of CNOT on an adjacent site pair (16×16, grouped),
/// control on the first site.
pub fn cnot_superop() -> DenseSuperOp {
    superop_from_kraus(&[cnot_matrix()]).expect("unitary Kraus list is valid")
}

/// Local noise families attachable to gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Depolarizing,
    Dephasing,
    BitFlip,
    AmplitudeDamping,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::Depolarizing,
        NoiseKind::Dephasing,
        NoiseKind::BitFlip,
        NoiseKind::AmplitudeDamping,
    ];

    /// Largest rate for which every mixture coefficient of the channel's
    /// defining form stays nonnegative.
    pub fn max_rate(self, n_sites: usize) -> f64 {
        match (self, n_sites) {
            (NoiseKind::Depolarizing, 1) => 0.75,
            (NoiseKind::Depolarizing, _) => 15.0 / 16.0,
            (NoiseKind::Dephasing, 1) => 0.5,
            (NoiseKind::Dephasing, _) => 0.75,
            (NoiseKind::BitFlip, _) => 1.0,
            (NoiseKind::AmplitudeDamping, _) => 1.0,
        }
    }
}

fn pauli(i: usize) -> Array2<C64> {
    match i {
        0 => Array2::eye(2),
        1 => array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
        2 => array![[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]],
        3 => array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]],
        _ => unreachable!("Pauli index 0..=3"),
    }
}

fn check_rate(kind: NoiseKind, n_sites: usize, rate: f64) -> Result<()> {
    let max = kind.max_rate(n_sites);
    if !(0.0..1.0).contains(&rate) || rate > max {
        return Err(Error::RateOutOfRange {
            kind: match (kind, n_sites) {
                (NoiseKind::Depolarizing, 1) => "single-qubit depolarizing",
                (NoiseKind::Depolarizing, _) => "two-qubit depolarizing",
                (NoiseKind::Dephasing, 1) => "single-qubit dephasing",
                (NoiseKind::Dephasing, _) => "two-qubit dephasing",
                (NoiseKind::BitFlip, 1) => "single-qubit bit flip",
                (NoiseKind::BitFlip, _) => "two-qubit bit flip",
                (NoiseKind::AmplitudeDamping, 1) => "single-qubit amplitude damping",
                (NoiseKind::AmplitudeDamping, _) => "two-qubit amplitude damping",
            },
            rate,
            max,
        });
    }
    Ok(())
}

fn amp_damp_kraus_1q(rate: f64) -> Vec<Array2<C64>> {
    let e0 = array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c((1.0 - rate).sqrt(), 0.)]];
    let e1 = array![[c(0., 0.), c(rate.sqrt(), 0.)], [c(0., 0.), c(0., 0.)]];
    vec![e0, e1]
}

/// Kraus operators of a noise channel on `n_sites` ∈ {1, 2} adjacent qubits.
pub fn noise_kraus(kind: NoiseKind, n_sites: usize, rate: f64) -> Result<Vec<Array2<C64>>> {
    if n_sites != 1 && n_sites != 2 {
        return Err(Error::DimensionMismatch(format!(
            "local noise supports 1 or 2 sites, got {n_sites}"
        )));
    }
    check_rate(kind, n_sites, rate)?;
    let ops = match (kind, n_sites) {
        (NoiseKind::Depolarizing, 1) => {
            // (1 − 4ε/3)ρ + (ε/3) Σ_{i=0..3} σ_i ρ σ_i  ≡  (1−ε)ρ + (ε/3)(XρX + YρY + ZρZ)
            let mut v = vec![pauli(0) * c((1.0 - rate).sqrt(), 0.)];
            for i in 1..4 {
                v.push(pauli(i) * c((rate / 3.0).sqrt(), 0.));
            }
            v
        }
        (NoiseKind::Depolarizing, _) => {
            // (1 − 16ε/15)ρ + (ε/15) Σ_{ij} (σ_i⊗σ_j) ρ (σ_i⊗σ_j)
            let mut v = vec![Array2::<C64>::eye(4) * c((1.0 - rate).sqrt(), 0.)];
            for i in 0..4 {
                for j in 0..4 {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    v.push(kron2(&pauli(i), &pauli(j)) * c((rate / 15.0).sqrt(), 0.));
                }
            }
            v
        }
        (NoiseKind::Dephasing, 1) => {
            // (1 − 2ε)ρ + ε(ρ + ZρZ)  ≡  (1−ε)ρ + ε ZρZ
            vec![
                pauli(0) * c((1.0 - rate).sqrt(), 0.),
                pauli(3) * c(rate.sqrt(), 0.),
            ]
        }
        (NoiseKind::Dephasing, _) => {
            // (1 − 4ε/3)ρ + (ε/3) Σ_{i,j ∈ {0,3}} (σ_i⊗σ_j) ρ (σ_i⊗σ_j)
            let mut v = vec![Array2::<C64>::eye(4) * c((1.0 - rate).sqrt(), 0.)];
            for &i in &[0usize, 3] {
                for &j in &[0usize, 3] {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    v.push(kron2(&pauli(i), &pauli(j)) * c((rate / 3.0).sqrt(), 0.));
                }
            }
            v
        }
        (NoiseKind::BitFlip, 1) => vec![
            pauli(0) * c((1.0 - rate).sqrt(), 0.),
            pauli(1) * c(rate.sqrt(), 0.),
        ],
        (NoiseKind::BitFlip, _) => vec![
            Array2::<C64>::eye(4) * c((1.0 - rate).sqrt(), 0.),
            kron2(&pauli(1), &pauli(1)) * c(rate.sqrt(), 0.),
        ],
        (NoiseKind::AmplitudeDamping, 1) => amp_damp_kraus_1q(rate),
        (NoiseKind::AmplitudeDamping, _) => {
            // defined as the product of two single-qubit channels at the same rate
            let one = amp_damp_kraus_1q(rate);
            let mut v = Vec::with_capacity(4);
            for a in &one {
                for b in &one {
                    v.push(kron2(a, b));
                }
            }
            v
        }
    };
    Ok(ops)
}

/// Superoperator of a local noise channel (4×4 or 16×16, grouped).
pub fn make_noise_superop(kind: NoiseKind, n_sites: usize, rate: f64) -> Result<DenseSuperOp> {
    let kraus = noise_kraus(kind, n_sites, rate)?;
    superop_from_kraus(&kraus)
}

/// A gate from the circuit alphabet, with its site footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Single(Gate1),
    Cnot,
}

/// Superoperator of a gate (4×4 for single-qubit gates, 16×16 for CNOT).
pub fn make_gate_superop(gate: Gate) -> DenseSuperOp {
    match gate {
        Gate::Single(g) => gate1_superop(g),
        Gate::Cnot => cnot_superop(),
    }
}

/// Largest admissible rate for the correlated depolarizing channel on
/// `n_qubits` qubits.
pub fn global_depolarizing_max_rate(n_qubits: usize) -> f64 {
    let d = 4f64.powi(n_qubits as i32);
    (d - 1.0) / d
}

fn check_global_rate(n_qubits: usize, rate: f64) -> Result<()> {
    let max = global_depolarizing_max_rate(n_qubits);
    if !(0.0..1.0).contains(&rate) || rate > max {
        return Err(Error::RateOutOfRange {
            kind: "correlated depolarizing",
            rate,
            max,
        });
    }
    Ok(())
}

/// Dense superoperator of correlated depolarizing noise across all
/// `n_qubits` qubits: (1 − γ)ρ + γ·Tr[ρ]·1/2ⁿ with γ = 4ⁿε/(4ⁿ − 1).
/// Reference implementation; subject to the dense qubit cap.
pub fn global_depolarizing_superop(n_qubits: usize, rate: f64) -> Result<DenseSuperOp> {
    check_global_rate(n_qubits, rate)?;
    let d4 = 4f64.powi(n_qubits as i32);
    let gamma = d4 * rate / (d4 - 1.0);
    let dim = 1usize << (2 * n_qubits);
    let v = DenseSuperOp::vec_identity(n_qubits)?;
    let mut mat = Array2::<C64>::eye(dim) * c(1.0 - gamma, 0.0);
    let scale = gamma / (1 << n_qubits) as f64;
    for r in 0..dim {
        if v[r].re == 0.0 {
            continue;
        }
        for col in 0..dim {
            mat[[r, col]] += c(scale, 0.0) * v[col];
        }
    }
    DenseSuperOp::from_matrix(n_qubits, mat)
}

/// Draws a concrete error rate uniformly from [0.8·mean, 1.2·mean].
pub fn sample_rate<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean == 0.0 {
        0.0
    } else {
        rng.gen_range(0.8 * mean..=1.2 * mean)
    }
}

/// The same correlated depolarizing channel as a bond-dimension-2 MPO:
/// one branch carries the identity map, the other the projector onto the
/// vectorized identity, with the scalar weights spread evenly over sites.
pub fn global_depolarizing_mpo(n_qubits: usize, rate: f64) -> Result<Mpo> {
    check_global_rate(n_qubits, rate)?;
    if n_qubits == 0 {
        return Err(Error::DimensionMismatch("zero-qubit MPO".into()));
    }
    let d4 = 4f64.powi(n_qubits as i32);
    let gamma = d4 * rate / (d4 - 1.0);
    // identity branch weight (1−γ), projector branch weight γ/2ⁿ; per-site
    // factors a·1 and b·P with aⁿ = 1−γ and bⁿ = γ/2ⁿ
    let a = (1.0 - gamma).powf(1.0 / n_qubits as f64);
    let b = (gamma / (1u64 << n_qubits) as f64).powf(1.0 / n_qubits as f64);
    // P = |1_s⟩⟩⟨⟨1_s| has entries 1 at (τ,σ) ∈ {0,3}²
    let mut proj = Array2::<C64>::zeros((4, 4));
    for &t in &[0usize, 3] {
        for &s in &[0usize, 3] {
            proj[[t, s]] = c(1.0, 0.0);
        }
    }
    let eye = Array2::<C64>::eye(4);
    let mut sites = Vec::with_capacity(n_qubits);
    for j in 0..n_qubits {
        let (dl, dr) = match (j == 0, j == n_qubits - 1) {
            (true, true) => (1, 1),
            (true, false) => (1, 2),
            (false, true) => (2, 1),
            (false, false) => (2, 2),
        };
        let mut t = ndarray::Array4::<C64>::zeros((dl, dr, 4, 4));
        // branch 0 = identity, branch 1 = projector (diagonal in the bond)
        let put = |t: &mut ndarray::Array4<C64>, l: usize, r: usize, m: &Array2<C64>, w: f64| {
            for tau in 0..4 {
                for sig in 0..4 {
                    t[[l, r, tau, sig]] = m[[tau, sig]] * c(w, 0.0);
                }
            }
        };
        if n_qubits == 1 {
            // single site: the whole channel in one tensor
            let mut m = eye.clone() * c(1.0 - gamma, 0.0);
            m = m + proj.clone() * c(gamma / 2.0, 0.0);
            put(&mut t, 0, 0, &m, 1.0);
        } else if j == 0 {
            put(&mut t, 0, 0, &eye, a);
            put(&mut t, 0, 1, &proj, b);
        } else if j == n_qubits - 1 {
            put(&mut t, 0, 0, &eye, a);
            put(&mut t, 1, 0, &proj, b);
        } else {
            put(&mut t, 0, 0, &eye, a);
            put(&mut t, 1, 1, &proj, b);
        }
        sites.push(t);
    }
    Mpo::from_sites(sites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{relative_distance, DenseState};
    use ndarray::Array1;

    /// Oracle: build a mixture-form superoperator Σ w_k (conjugation by U_k)
    /// directly from the channel's defining convex combination.
    fn mixture_superop(terms: &[(f64, Array2<C64>)]) -> Array2<C64> {
        let dim = terms[0].1.nrows();
        let sdim = dim * dim;
        let mut acc = Array2::<C64>::zeros((sdim, sdim));
        for (w, u) in terms {
            let s = superop_from_kraus(&[u.clone()]).unwrap();
            acc = acc + s.matrix() * c(*w, 0.0);
        }
        acc
    }

    fn max_dev(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn all_local_channels_are_tp_and_cp() {
        for kind in NoiseKind::ALL {
            for n_sites in [1usize, 2] {
                let rate = 0.3 * kind.max_rate(n_sites);
                let s = make_noise_superop(kind, n_sites, rate).unwrap();
                assert!(s.is_trace_preserving(1e-12), "{kind:?} {n_sites} not TP");
                assert!(
                    s.is_completely_positive(1e-10).unwrap(),
                    "{kind:?} {n_sites} not CP"
                );
            }
        }
    }

    #[test]
    fn depolarizing_matches_its_mixture_definition() {
        let eps = 0.21;
        let s = make_noise_superop(NoiseKind::Depolarizing, 1, eps).unwrap();
        let mut terms = vec![(1.0 - 4.0 * eps / 3.0, pauli(0))];
        for i in 0..4 {
            terms.push((eps / 3.0, pauli(i)));
        }
        assert!(max_dev(s.matrix(), &mixture_superop(&terms)) < 1e-14);

        let eps2 = 0.4;
        let s = make_noise_superop(NoiseKind::Depolarizing, 2, eps2).unwrap();
        let mut terms = vec![(1.0 - 16.0 * eps2 / 15.0, Array2::eye(4))];
        for i in 0..4 {
            for j in 0..4 {
                terms.push((eps2 / 15.0, kron2(&pauli(i), &pauli(j))));
            }
        }
        assert!(max_dev(s.matrix(), &mixture_superop(&terms)) < 1e-14);
    }

    #[test]
    fn dephasing_matches_its_mixture_definition() {
        let eps = 0.17;
        let s = make_noise_superop(NoiseKind::Dephasing, 1, eps).unwrap();
        let terms = vec![
            (1.0 - 2.0 * eps, pauli(0)),
            (eps, pauli(0)),
            (eps, pauli(3)),
        ];
        assert!(max_dev(s.matrix(), &mixture_superop(&terms)) < 1e-14);

        let eps2 = 0.3;
        let s = make_noise_superop(NoiseKind::Dephasing, 2, eps2).unwrap();
        let mut terms = vec![(1.0 - 4.0 * eps2 / 3.0, Array2::eye(4))];
        for &i in &[0usize, 3] {
            for &j in &[0usize, 3] {
                terms.push((eps2 / 3.0, kron2(&pauli(i), &pauli(j))));
            }
        }
        assert!(max_dev(s.matrix(), &mixture_superop(&terms)) < 1e-14);
    }

    #[test]
    fn bit_flip_matches_its_mixture_definition() {
        let eps = 0.25;
        let s = make_noise_superop(NoiseKind::BitFlip, 1, eps).unwrap();
        let terms = vec![(1.0 - eps, pauli(0)), (eps, pauli(1))];
        assert!(max_dev(s.matrix(), &mixture_superop(&terms)) < 1e-14);

        let s = make_noise_superop(NoiseKind::BitFlip, 2, eps).unwrap();
        let terms = vec![
            (1.0 - eps, Array2::eye(4)),
            (eps, kron2(&pauli(1), &pauli(1))),
        ];
        assert!(max_dev(s.matrix(), &mixture_superop(&terms)) < 1e-14);
    }

    #[test]
    fn amplitude_damping_superop_entries_are_exact() {
        let eps: f64 = 0.19;
        let s = make_noise_superop(NoiseKind::AmplitudeDamping, 1, eps).unwrap();
        let r = (1.0 - eps).sqrt();
        let expect = array![
            [c(1., 0.), c(0., 0.), c(0., 0.), c(eps, 0.)],
            [c(0., 0.), c(r, 0.), c(0., 0.), c(0., 0.)],
            [c(0., 0.), c(0., 0.), c(r, 0.), c(0., 0.)],
            [c(0., 0.), c(0., 0.), c(0., 0.), c(1.0 - eps, 0.)]
        ];
        assert!(max_dev(s.matrix(), &expect) < 1e-15);
    }

    #[test]
    fn two_site_amplitude_damping_is_the_product_channel() {
        let eps = 0.23;
        let s2 = make_noise_superop(NoiseKind::AmplitudeDamping, 2, eps).unwrap();
        let s1 = make_noise_superop(NoiseKind::AmplitudeDamping, 1, eps).unwrap();
        let prod = crate::dense::kron(s1.matrix(), s1.matrix());
        assert!(max_dev(s2.matrix(), &prod) < 1e-14);
    }

    #[test]
    fn global_depolarizing_matches_pauli_string_oracle() {
        // two qubits: sum over all 16 Pauli pairs with the defining weights
        let n = 2;
        let eps = 0.05;
        let d4 = 16.0;
        let mut terms = vec![(1.0 - d4 * eps / (d4 - 1.0), Array2::eye(4))];
        for i in 0..4 {
            for j in 0..4 {
                terms.push((eps / (d4 - 1.0), kron2(&pauli(i), &pauli(j))));
            }
        }
        let oracle = mixture_superop(&terms);
        let s = global_depolarizing_superop(n, eps).unwrap();
        assert!(max_dev(s.matrix(), &oracle) < 1e-14);
        assert!(s.is_trace_preserving(1e-12));
    }

    #[test]
    fn global_depolarizing_mpo_contracts_to_dense() {
        for n in [1usize, 2, 3] {
            let eps = 0.07;
            let mpo = global_depolarizing_mpo(n, eps).unwrap();
            assert!(mpo.max_bond() <= 2);
            let dense = global_depolarizing_superop(n, eps).unwrap();
            let as_dense = mpo.to_dense().unwrap();
            assert!(relative_distance(&as_dense, &dense).unwrap() < 1e-28);
        }
    }

    #[test]
    fn gate_superops_act_correctly_on_basis_states() {
        // CNOT flips the target when the control is 1: |10⟩⟨10| → |11⟩⟨11|
        let cx = cnot_superop();
        let mut rho = Array2::<C64>::zeros((4, 4));
        rho[[2, 2]] = c(1., 0.); // |10⟩⟨10|
        let out = cx
            .apply(&DenseState::from_density_matrix(&rho).unwrap())
            .unwrap()
            .to_density_matrix();
        let mut expect = Array2::<C64>::zeros((4, 4));
        expect[[3, 3]] = c(1., 0.);
        assert!(max_dev(&out, &expect) < 1e-15);

        // T rotates the coherence by e^{-iπ/4}: ⟨0|ρ|1⟩ picks up the phase
        let t = gate1_superop(Gate1::T);
        let mut rho = Array2::<C64>::zeros((2, 2));
        rho[[0, 1]] = c(1., 0.);
        rho[[1, 0]] = c(1., 0.);
        let out = t
            .apply(&DenseState::from_density_matrix(&rho).unwrap())
            .unwrap()
            .to_density_matrix();
        let p = std::f64::consts::FRAC_PI_4;
        assert!((out[[0, 1]] - c(p.cos(), -p.sin())).norm() < 1e-15);
        assert!((out[[1, 0]] - c(p.cos(), p.sin())).norm() < 1e-15);
    }

    #[test]
    fn unitary_gate_superops_are_orthogonal_matrices() {
        for g in Gate1::ALL {
            let s = gate1_superop(g);
            let prod = s.dagger().compose(&s).unwrap();
            let eye = DenseSuperOp::identity(1).unwrap();
            assert!(relative_distance(&prod, &eye).unwrap() < 1e-28);
        }
        let cx = cnot_superop();
        let prod = cx.dagger().compose(&cx).unwrap();
        let eye = DenseSuperOp::identity(2).unwrap();
        assert!(relative_distance(&prod, &eye).unwrap() < 1e-28);
    }

    #[test]
    fn rate_ranges_are_enforced() {
        assert!(make_noise_superop(NoiseKind::Depolarizing, 1, 0.76).is_err());
        assert!(make_noise_superop(NoiseKind::Depolarizing, 2, 0.94).is_err());
        assert!(make_noise_superop(NoiseKind::Dephasing, 1, 0.51).is_err());
        assert!(make_noise_superop(NoiseKind::Dephasing, 2, 0.76).is_err());
        assert!(make_noise_superop(NoiseKind::BitFlip, 1, 1.0).is_err());
        assert!(make_noise_superop(NoiseKind::AmplitudeDamping, 1, -0.1).is_err());
        assert!(global_depolarizing_superop(2, 0.95).is_err());
        assert!(make_noise_superop(NoiseKind::Depolarizing, 1, 0.0).is_ok());
    }

    #[test]
    fn vectorized_identity_row_has_norm_two_per_qubit() {
        for n in [1usize, 2, 3] {
            let v: Array1<C64> = DenseSuperOp::vec_identity(n).unwrap();
            let norm_sq: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            assert_eq!(norm_sq, 2f64.powi(n as i32));
        }
    }
}
