//! Matrix product states over vectorized density matrices.
//!
//! A [`VecStateMps`] is a chain of rank-3 tensors (left bond, right bond,
//! physical) whose physical leg is one vectorized qubit (dimension 4).
//! Applying a circuit layer means contracting an MPO into the chain with a
//! zip-up sweep and truncating to the simulation bond cap.

use ndarray::{Array1, Array3, Array4, Ix3, IxDyn};
use num_complex::Complex64 as C64;

use crate::chain;
use crate::contract::{permute_std, standardize};
use crate::decomp::{TruncationConfig, TruncationReport};
use crate::dense::DenseState;
use crate::error::{Error, Result};
use crate::mpo::Mpo;

/// Matrix product state with physical dimension 4 per site.
#[derive(Debug, Clone)]
pub struct VecStateMps {
    sites: Vec<Array3<C64>>,
}

impl VecStateMps {
    /// Builds a state from site tensors (left, right, physical=4).
    pub fn from_sites(sites: Vec<Array3<C64>>) -> Result<Self> {
        for (j, s) in sites.iter().enumerate() {
            if s.shape()[2] != 4 {
                return Err(Error::DimensionMismatch(format!(
                    "site {j} physical leg must be 4, got {}",
                    s.shape()[2]
                )));
            }
        }
        chain::validate(&sites)?;
        Ok(Self { sites })
    }

    /// Product state with the same 4-vector on every site.
    pub fn product(n: usize, local: [C64; 4]) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch("zero-site MPS".into()));
        }
        let mut site = Array3::<C64>::zeros((1, 1, 4));
        for (p, v) in local.iter().enumerate() {
            site[[0, 0, p]] = *v;
        }
        Ok(Self {
            sites: vec![site; n],
        })
    }

    /// |0…0⟩⟨0…0| as a product chain: per-site vector (1, 0, 0, 0).
    pub fn zero_state(n: usize) -> Result<Self> {
        Self::product(
            n,
            [
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
            ],
        )
    }

    /// The vectorized identity ⟨⟨1| as a ket chain: per-site (1, 0, 0, 1).
    pub fn identity_vector(n: usize) -> Result<Self> {
        Self::product(
            n,
            [
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
            ],
        )
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Array3<C64>] {
        &self.sites
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1]
            .iter()
            .map(|s| s.shape()[1])
            .collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Hermitian inner product ⟨self|other⟩ (self conjugated).
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        // chain::inner conjugates its second argument
        chain::inner(&other.sites, &self.sites)
    }

    pub fn norm_sq(&self) -> f64 {
        chain::norm_sq(&self.sites)
    }

    /// Trace of the represented operator: ⟨⟨1|ρ⟩⟩.
    pub fn trace(&self) -> Result<C64> {
        let one = Self::identity_vector(self.n_sites())?;
        one.overlap(self)
    }

    /// Compresses every bond under `cfg` (mixed-canonical SVD sweep).
    pub fn truncate(&mut self, cfg: &TruncationConfig) -> Result<TruncationReport> {
        chain::right_canonicalize(&mut self.sites, 0)?;
        let discarded = chain::truncate_ltr(&mut self.sites, cfg)?;
        Ok(TruncationReport {
            discarded,
            max_bond_after: self.max_bond(),
        })
    }

    /// Contracts into the dense vectorized state (state cap applies).
    pub fn to_dense(&self) -> Result<DenseState> {
        let n = self.sites.len();
        if n > crate::dense::DENSE_STATE_QUBIT_CAP {
            return Err(Error::DenseCapExceeded {
                limit: crate::dense::DENSE_STATE_QUBIT_CAP,
                requested: n,
            });
        }
        let mut acc = ndarray::ArrayD::<C64>::ones(IxDyn(&[1, 1]));
        for s in &self.sites {
            let t = crate::contract::tensordot(acc.view(), s.view().into_dyn(), &[1], &[0]); // (prev, r, p)
            let prev = t.shape()[0];
            let r = t.shape()[1];
            acc = permute_std(t, &[0, 2, 1])
                .into_shape_with_order(IxDyn(&[prev * 4, r]))
                .expect("accumulator reshape");
        }
        let dim = 1usize << (2 * n);
        let v = acc
            .into_shape_with_order(IxDyn(&[dim]))
            .expect("vector reshape");
        DenseState::from_vec(n, Array1::from_iter(v.iter().copied()))
    }
}

/// Applies an MPO layer to a state: |ρ'⟩⟩ = layer·|ρ⟩⟩, zip-up plus cleanup
/// under `cfg`.
pub fn apply_mpo_to_mps(
    state: &VecStateMps,
    layer: &Mpo,
    cfg: &TruncationConfig,
) -> Result<(VecStateMps, TruncationReport)> {
    if state.n_sites() != layer.n_sites() {
        return Err(Error::DimensionMismatch(format!(
            "layer on {} sites applied to state on {}",
            layer.n_sites(),
            state.n_sites()
        )));
    }
    // lift state sites (l, r, 4) to (l, r, 4, keep=1) for the shared zip
    let lifted: Vec<Array4<C64>> = state
        .sites
        .iter()
        .map(|s| {
            let (l, r) = (s.shape()[0], s.shape()[1]);
            standardize(s.view().into_dyn())
                .into_shape_with_order((l, r, 4, 1))
                .expect("lift")
        })
        .collect();
    let (sites4, discarded) = chain::zip_apply(layer.sites(), &lifted, cfg)?;
    let sites: Vec<Array3<C64>> = sites4
        .into_iter()
        .map(|s| {
            let (l, r) = (s.shape()[0], s.shape()[1]);
            standardize(s.view().into_dyn())
                .into_shape_with_order((l, r, 4))
                .expect("drop keep leg")
                .into_dimensionality::<Ix3>()
                .expect("rank-3")
        })
        .collect();
    let out = VecStateMps { sites };
    let max_bond_after = out.max_bond();
    Ok((
        out,
        TruncationReport {
            discarded,
            max_bond_after,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{cnot_superop, gate1_superop, make_noise_superop, Gate1, NoiseKind};
    use crate::dense::relative_distance_state;
    use crate::mpo::layer_from_local_ops;

    #[test]
    fn zero_state_matches_dense() {
        let s = VecStateMps::zero_state(3).unwrap();
        let d = s.to_dense().unwrap();
        let expect = DenseState::product_zero(3).unwrap();
        assert_eq!(relative_distance_state(&d, &expect).unwrap(), 0.0);
        assert!((s.trace().unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn layer_application_matches_dense_evolution() {
        let n = 4;
        let state = VecStateMps::zero_state(n).unwrap();
        let layer = layer_from_local_ops(
            n,
            &[
                (0, gate1_superop(Gate1::H).matrix().clone()),
                (1, cnot_superop().matrix().clone()),
                (3, gate1_superop(Gate1::S).matrix().clone()),
            ],
        )
        .unwrap();
        let (out, _) = apply_mpo_to_mps(&state, &layer, &TruncationConfig::default()).unwrap();
        let dense_layer = layer.to_dense().unwrap();
        let expect = dense_layer
            .apply(&DenseState::product_zero(n).unwrap())
            .unwrap();
        assert!(relative_distance_state(&out.to_dense().unwrap(), &expect).unwrap() < 1e-20);
    }

    #[test]
    fn noisy_evolution_keeps_unit_trace() {
        let n = 3;
        let mut state = VecStateMps::zero_state(n).unwrap();
        let cfg = TruncationConfig::default();
        let layers = [
            layer_from_local_ops(
                n,
                &[
                    (0, gate1_superop(Gate1::H).matrix().clone()),
                    (1, gate1_superop(Gate1::H).matrix().clone()),
                ],
            )
            .unwrap(),
            layer_from_local_ops(n, &[(0, cnot_superop().matrix().clone())]).unwrap(),
            layer_from_local_ops(
                n,
                &[(
                    1,
                    make_noise_superop(NoiseKind::Depolarizing, 2, 0.05)
                        .unwrap()
                        .matrix()
                        .clone(),
                )],
            )
            .unwrap(),
        ];
        for layer in &layers {
            let (next, _) = apply_mpo_to_mps(&state, layer, &cfg).unwrap();
            state = next;
        }
        assert!((state.trace().unwrap() - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn truncation_reports_discarded_weight() {
        // entangle then cap the bond at 1: discarded weight must equal the
        // norm loss
        let n = 2;
        let state = VecStateMps::zero_state(n).unwrap();
        let h = layer_from_local_ops(n, &[(0, gate1_superop(Gate1::H).matrix().clone())]).unwrap();
        let cx = layer_from_local_ops(n, &[(0, cnot_superop().matrix().clone())]).unwrap();
        let cfg = TruncationConfig::default();
        let (s1, _) = apply_mpo_to_mps(&state, &h, &cfg).unwrap();
        let (mut s2, _) = apply_mpo_to_mps(&s1, &cx, &cfg).unwrap();
        let norm_before = s2.norm_sq();
        let report = s2
            .truncate(&TruncationConfig {
                max_bond: Some(1),
                cutoff: 0.0,
            })
            .unwrap();
        let norm_after = s2.norm_sq();
        let lost = norm_before - norm_after;
        assert!(
            (report.total_discarded() - lost).abs() < 1e-12,
            "discarded {} vs norm loss {}",
            report.total_discarded(),
            lost
        );
        assert_eq!(s2.max_bond(), 1);
    }

    #[test]
    fn overlap_is_conjugate_symmetric() {
        let n = 3;
        let mut rng = crate::rng::rng_for(5, 5);
        let a_mpo = Mpo::random(n, 2, &mut rng).unwrap();
        let z = VecStateMps::zero_state(n).unwrap();
        let cfg = TruncationConfig::default();
        let (a, _) = apply_mpo_to_mps(&z, &a_mpo, &cfg).unwrap();
        let b_mpo = Mpo::random(n, 2, &mut rng).unwrap();
        let (b, _) = apply_mpo_to_mps(&z, &b_mpo, &cfg).unwrap();
        let ab = a.overlap(&b).unwrap();
        let ba = b.overlap(&a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-12);
        // and against dense
        let dense = a.to_dense().unwrap().overlap(&b.to_dense().unwrap()).unwrap();
        assert!((ab - dense).norm() < 1e-12);
    }
}
