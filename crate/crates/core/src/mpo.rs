//! Matrix product operators over vectorized density matrices.
//!
//! An [`Mpo`] is a chain of rank-4 tensors A_j with index order
//! (left bond, right bond, output leg τ, input leg σ); both physical legs
//! have dimension 4 (one vectorized qubit). Boundary bonds have dimension 1.
//! Contracting the chain over its bonds yields the 4ⁿ×4ⁿ superoperator matrix
//! in the grouped basis of [`crate::dense`], which is exactly what
//! [`Mpo::to_dense`] computes for small n.

use ndarray::{Array2, Array3, Array4, ArrayD, Ix2, Ix4, IxDyn};
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::chain;
use crate::contract::{permute_std, standardize, tensordot};
use crate::decomp::{svd_truncate, TruncationConfig, TruncationReport};
use crate::dense::DenseSuperOp;
use crate::error::{Error, Result};

/// Matrix product superoperator with physical legs of dimension 4.
#[derive(Debug, Clone)]
pub struct Mpo {
    sites: Vec<Array4<C64>>,
}

impl Mpo {
    /// Builds an MPO from site tensors (left, right, τ, σ), validating bond
    /// adjacency, unit boundary bonds, and physical dimensions.
    pub fn from_sites(sites: Vec<Array4<C64>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::DimensionMismatch("empty MPO".into()));
        }
        for (j, s) in sites.iter().enumerate() {
            if s.shape()[2] != 4 || s.shape()[3] != 4 {
                return Err(Error::DimensionMismatch(format!(
                    "site {j} physical legs must be 4×4, got {}×{}",
                    s.shape()[2],
                    s.shape()[3]
                )));
            }
        }
        let as3 = sites3_of(&sites);
        chain::validate(&as3)?;
        Ok(Self { sites })
    }

    /// Identity map on `n` sites (all bonds 1).
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch("zero-site MPO".into()));
        }
        let mut site = Array4::<C64>::zeros((1, 1, 4, 4));
        for p in 0..4 {
            site[[0, 0, p, p]] = C64::new(1.0, 0.0);
        }
        Ok(Self {
            sites: vec![site; n],
        })
    }

    /// Random MPO with every internal bond equal to `bond` (clamped near the
    /// boundaries is unnecessary — bonds may exceed the entanglement capacity
    /// and simply carry redundancy). Entries are uniform complex in the unit
    /// square, scaled so site norms stay O(1).
    pub fn random<R: Rng>(n: usize, bond: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || bond == 0 {
            return Err(Error::DimensionMismatch("empty random MPO".into()));
        }
        let mut sites = Vec::with_capacity(n);
        for j in 0..n {
            let dl = if j == 0 { 1 } else { bond };
            let dr = if j == n - 1 { 1 } else { bond };
            let scale = 1.0 / ((dl * dr) as f64).sqrt();
            let t = Array4::from_shape_fn((dl, dr, 4, 4), |_| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
            });
            sites.push(t);
        }
        Ok(Self { sites })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Array4<C64>] {
        &self.sites
    }

    pub fn site(&self, j: usize) -> &Array4<C64> {
        &self.sites[j]
    }

    pub(crate) fn site_mut(&mut self, j: usize) -> &mut Array4<C64> {
        &mut self.sites[j]
    }

    /// Internal bond dimensions (length n−1).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1]
            .iter()
            .map(|s| s.shape()[1])
            .collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Hermitian adjoint: swaps the physical legs and conjugates.
    pub fn dagger(&self) -> Self {
        let sites = self
            .sites
            .iter()
            .map(|s| {
                standardize(s.view().permuted_axes((0, 1, 3, 2)).into_dyn())
                    .mapv(|z| z.conj())
                    .into_dimensionality::<Ix4>()
                    .expect("rank-4")
            })
            .collect();
        Self { sites }
    }

    /// Multiplies the whole operator by a scalar (applied at site 0).
    pub fn scale(&mut self, factor: C64) {
        self.sites[0].mapv_inplace(|z| z * factor);
    }

    /// Gauges the chain so sites left of `center` are left-isometries and
    /// sites right of it are right-isometries (QR only, no truncation).
    pub fn canonicalize(&mut self, center: usize) -> Result<()> {
        if center >= self.sites.len() {
            return Err(Error::DimensionMismatch(format!(
                "canonical center {center} out of range for {} sites",
                self.sites.len()
            )));
        }
        let mut as3 = sites3_of(&self.sites);
        chain::left_canonicalize(&mut as3, center)?;
        chain::right_canonicalize(&mut as3, center)?;
        self.sites = sites4_of(&as3);
        Ok(())
    }

    /// Per-site isometry residuals relative to `center` (diagnostic).
    pub fn isometry_residuals(&self, center: usize) -> Vec<f64> {
        chain::isometry_residuals(&sites3_of(&self.sites), center)
    }

    /// Compresses every bond under `cfg` via a mixed-canonical SVD sweep.
    /// The chain is first gauged right-canonical so each cut's singular
    /// values are the global ones; the report lists the discarded squared
    /// weight per bond.
    pub fn truncate(&mut self, cfg: &TruncationConfig) -> Result<TruncationReport> {
        let mut as3 = sites3_of(&self.sites);
        chain::right_canonicalize(&mut as3, 0)?;
        let discarded = chain::truncate_ltr(&mut as3, cfg)?;
        self.sites = sites4_of(&as3);
        Ok(TruncationReport {
            discarded,
            max_bond_after: self.max_bond(),
        })
    }

    /// Hilbert–Schmidt pairing Σ self·conj(other) = Tr[other† · self].
    pub fn inner(&self, other: &Self) -> Result<C64> {
        chain::inner(&sites3_of(&self.sites), &sites3_of(&other.sites))
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        chain::norm_sq(&sites3_of(&self.sites))
    }

    /// Contracts the chain into its dense superoperator (small n only).
    pub fn to_dense(&self) -> Result<DenseSuperOp> {
        let n = self.sites.len();
        if n > crate::dense::DENSE_SUPEROP_QUBIT_CAP {
            return Err(Error::DenseCapExceeded {
                limit: crate::dense::DENSE_SUPEROP_QUBIT_CAP,
                requested: n,
            });
        }
        // accumulate T[(τ₀σ₀τ₁σ₁…), bond]
        let mut acc = ArrayD::<C64>::ones(IxDyn(&[1, 1]));
        for s in &self.sites {
            let t = tensordot(acc.view(), s.view().into_dyn(), &[1], &[0]); // (prev, r, τ, σ)
            let prev = t.shape()[0];
            let r = t.shape()[1];
            acc = permute_std(t, &[0, 2, 3, 1])
                .into_shape_with_order(IxDyn(&[prev * 16, r]))
                .expect("accumulator reshape");
        }
        let dim = 1usize << (2 * n);
        let interleaved = acc
            .into_shape_with_order(IxDyn(&vec![4; 2 * n]))
            .expect("interleaved legs");
        // (τ₀,σ₀,…) → (τ₀,τ₁,…,σ₀,σ₁,…)
        let mut perm = Vec::with_capacity(2 * n);
        perm.extend((0..n).map(|j| 2 * j));
        perm.extend((0..n).map(|j| 2 * j + 1));
        let mat = standardize(interleaved.permuted_axes(IxDyn(&perm)).view())
            .into_shape_with_order((dim, dim))
            .expect("matrix reshape")
            .into_dimensionality::<Ix2>()
            .expect("rank-2");
        DenseSuperOp::from_matrix(n, mat)
    }

    pub(crate) fn sites3(&self) -> Vec<Array3<C64>> {
        sites3_of(&self.sites)
    }

    pub(crate) fn from_sites3_unchecked(v: &[Array3<C64>]) -> Self {
        Self {
            sites: sites4_of(v),
        }
    }
}

fn sites3_of(sites: &[Array4<C64>]) -> Vec<Array3<C64>> {
    sites
        .iter()
        .map(|s| {
            let (l, r) = (s.shape()[0], s.shape()[1]);
            standardize(s.view().into_dyn())
                .into_shape_with_order((l, r, 16))
                .expect("flatten physical legs")
        })
        .collect()
}

fn sites4_of(sites: &[Array3<C64>]) -> Vec<Array4<C64>> {
    sites
        .iter()
        .map(|s| {
            let (l, r) = (s.shape()[0], s.shape()[1]);
            standardize(s.view().into_dyn())
                .into_shape_with_order((l, r, 4, 4))
                .expect("split physical legs")
        })
        .collect()
}

/// Applies `layer` after `target` (matrix product layer·target), compressing
/// with a zip-up sweep plus cleanup under `cfg`.
pub fn apply_mpo_layer(
    target: &Mpo,
    layer: &Mpo,
    cfg: &TruncationConfig,
) -> Result<(Mpo, TruncationReport)> {
    if target.n_sites() != layer.n_sites() {
        return Err(Error::DimensionMismatch(format!(
            "layer on {} sites applied to operator on {}",
            layer.n_sites(),
            target.n_sites()
        )));
    }
    let (sites, discarded) = chain::zip_apply(&layer.sites, &target.sites, cfg)?;
    let out = Mpo { sites };
    let max_bond_after = out.max_bond();
    Ok((
        out,
        TruncationReport {
            discarded,
            max_bond_after,
        },
    ))
}

/// Relative Frobenius distance ‖a − b‖²_F / √(‖a‖²‖b‖²), evaluated from
/// three transfer contractions without forming a − b.
pub fn relative_distance_mpo(a: &Mpo, b: &Mpo) -> Result<f64> {
    let na = a.norm_sq();
    let nb = b.norm_sq();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DimensionMismatch(
            "relative distance undefined for zero-norm operators".into(),
        ));
    }
    let cross = a.inner(b)?;
    let diff = (na + nb - 2.0 * cross.re).max(0.0);
    Ok(diff / (na * nb).sqrt())
}

/// Squared deviation from trace preservation, |⟨⟨1| − ⟨⟨1|M|², evaluated by
/// transfer contraction. ⟨⟨1| is the product row vector with per-site
/// pattern (1, 0, 0, 1).
pub fn trace_infidelity_mpo(m: &Mpo) -> f64 {
    let n = m.n_sites();
    let t1 = 2f64.powi(n as i32);
    // t2 = Σ_σ (⟨⟨1|M)[σ]·v[σ]: product of per-site bond matrices
    let mut e2 = ArrayD::<C64>::ones(IxDyn(&[1]));
    for s in &m.sites {
        let (l, r) = (s.shape()[0], s.shape()[1]);
        let mut w = Array2::<C64>::zeros((l, r));
        for li in 0..l {
            for ri in 0..r {
                for &tau in &[0usize, 3] {
                    for &sig in &[0usize, 3] {
                        w[[li, ri]] += s[[li, ri, tau, sig]];
                    }
                }
            }
        }
        e2 = tensordot(e2.view(), w.view().into_dyn(), &[0], &[0]);
    }
    let t2 = e2[IxDyn(&[0])];
    // t3 = |⟨⟨1|M|²: doubled transfer over (bond, conj bond)
    let mut e3 = ArrayD::<C64>::ones(IxDyn(&[1, 1]));
    for s in &m.sites {
        let (l, r) = (s.shape()[0], s.shape()[1]);
        // W[l, r, σ] = Σ_{τ∈{0,3}} s[l,r,τ,σ]
        let mut w = Array3::<C64>::zeros((l, r, 4));
        for li in 0..l {
            for ri in 0..r {
                for sig in 0..4 {
                    w[[li, ri, sig]] = s[[li, ri, 0, sig]] + s[[li, ri, 3, sig]];
                }
            }
        }
        let t = tensordot(e3.view(), w.view().into_dyn(), &[0], &[0]); // (l̄, r, σ)
        let wc = w.mapv(|z| z.conj());
        e3 = tensordot(t.view(), wc.view().into_dyn(), &[0, 2], &[0, 2]); // (r, r̄)
    }
    let t3 = e3[IxDyn(&[0, 0])];
    (t1 - 2.0 * t2.re + t3.re).max(0.0)
}

/// Splits a two-site grouped superoperator (16×16) into a pair of MPO site
/// tensors (1, k, 4, 4) · (k, 1, 4, 4) by SVD across the site cut, keeping
/// every singular value above a fixed relative floor.
pub fn split_two_site_op(op: &Array2<C64>) -> Result<(Array4<C64>, Array4<C64>)> {
    if op.shape() != [16, 16] {
        return Err(Error::DimensionMismatch(format!(
            "expected 16×16 two-site superoperator, got {}×{}",
            op.nrows(),
            op.ncols()
        )));
    }
    // op[(g₁ g₂), (g₁' g₂')] → M[(g₁ g₁'), (g₂ g₂')]
    let t = op
        .view()
        .into_shape_with_order((4, 4, 4, 4))
        .expect("split indices");
    let m = standardize(t.permuted_axes((0, 2, 1, 3)).into_dyn())
        .into_shape_with_order((16, 16))
        .expect("regroup")
        .into_dimensionality::<Ix2>()
        .expect("rank-2");
    let cfg = TruncationConfig {
        max_bond: None,
        cutoff: 1e-13,
    };
    let tr = svd_truncate(&m, &cfg)?;
    let k = tr.s.len();
    let mut left = Array4::<C64>::zeros((1, k, 4, 4));
    let mut right = Array4::<C64>::zeros((k, 1, 4, 4));
    for b in 0..k {
        let sq = tr.s[b].sqrt();
        for tau in 0..4 {
            for sig in 0..4 {
                left[[0, b, tau, sig]] = tr.u[[4 * tau + sig, b]] * sq;
                right[[b, 0, tau, sig]] = tr.vt[[b, 4 * tau + sig]] * sq;
            }
        }
    }
    Ok((left, right))
}

/// Builds a single circuit layer as an MPO from non-overlapping local
/// superoperators: `ops` pairs a starting site with a grouped 4×4 (one-site)
/// or 16×16 (adjacent two-site) matrix; untouched sites carry the identity.
pub fn layer_from_local_ops(n: usize, ops: &[(usize, Array2<C64>)]) -> Result<Mpo> {
    let mut slots: Vec<Option<Array4<C64>>> = vec![None; n];
    for (start, op) in ops {
        match op.nrows() {
            4 => {
                if *start >= n || slots[*start].is_some() {
                    return Err(Error::InvalidCircuit(format!(
                        "one-site op at {start} out of range or overlapping"
                    )));
                }
                let mut t = Array4::<C64>::zeros((1, 1, 4, 4));
                for tau in 0..4 {
                    for sig in 0..4 {
                        t[[0, 0, tau, sig]] = op[[tau, sig]];
                    }
                }
                slots[*start] = Some(t);
            }
            16 => {
                if start + 1 >= n || slots[*start].is_some() || slots[start + 1].is_some() {
                    return Err(Error::InvalidCircuit(format!(
                        "two-site op at {start} out of range or overlapping"
                    )));
                }
                let (l, r) = split_two_site_op(op)?;
                slots[*start] = Some(l);
                slots[start + 1] = Some(r);
            }
            d => {
                return Err(Error::DimensionMismatch(format!(
                    "local op must be 4×4 or 16×16, got {d}×{d}"
                )));
            }
        }
    }
    let eye = {
        let mut t = Array4::<C64>::zeros((1, 1, 4, 4));
        for p in 0..4 {
            t[[0, 0, p, p]] = C64::new(1.0, 0.0);
        }
        t
    };
    let sites = slots
        .into_iter()
        .map(|s| s.unwrap_or_else(|| eye.clone()))
        .collect();
    Mpo::from_sites(sites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{cnot_superop, gate1_superop, make_noise_superop, Gate1, NoiseKind};
    use crate::dense::relative_distance;

    fn random_mpo(n: usize, bond: usize, seed: u64) -> Mpo {
        let mut rng = crate::rng::rng_for(seed, 99);
        Mpo::random(n, bond, &mut rng).unwrap()
    }

    #[test]
    fn identity_contracts_to_dense_identity() {
        let m = Mpo::identity(3).unwrap();
        let d = m.to_dense().unwrap();
        let eye = DenseSuperOp::identity(3).unwrap();
        assert_eq!(relative_distance(&d, &eye).unwrap(), 0.0);
    }

    #[test]
    fn inner_and_norm_match_dense() {
        let a = random_mpo(4, 3, 1);
        let b = random_mpo(4, 2, 2);
        let da = a.to_dense().unwrap();
        let db = b.to_dense().unwrap();
        let dense_inner: C64 = da
            .matrix()
            .iter()
            .zip(db.matrix().iter())
            .map(|(x, y)| x * y.conj())
            .sum();
        let tn_inner = a.inner(&b).unwrap();
        assert!((tn_inner - dense_inner).norm() < 1e-10 * dense_inner.norm().max(1.0));
        assert!((a.norm_sq() - da.frobenius_norm_sq()).abs() < 1e-9);
    }

    #[test]
    fn dagger_matches_dense_adjoint() {
        let a = random_mpo(3, 3, 3);
        let dd = a.dagger().to_dense().unwrap();
        let da = a.to_dense().unwrap().dagger();
        assert!(relative_distance(&dd, &da).unwrap() < 1e-24);
    }

    #[test]
    fn canonicalize_preserves_operator_and_yields_isometries() {
        let mut a = random_mpo(5, 4, 4);
        let before = a.to_dense().unwrap();
        a.canonicalize(2).unwrap();
        let after = a.to_dense().unwrap();
        assert!(relative_distance(&before, &after).unwrap() < 1e-20);
        for (j, r) in a.isometry_residuals(2).iter().enumerate() {
            assert!(*r <= 1e-12, "site {j} residual {r}");
        }
    }

    fn random_mpo_with_bonds(bonds: &[usize], seed: u64) -> Mpo {
        let mut rng = crate::rng::rng_for(seed, 98);
        let n = bonds.len() + 1;
        let mut sites = Vec::with_capacity(n);
        for j in 0..n {
            let dl = if j == 0 { 1 } else { bonds[j - 1] };
            let dr = if j == n - 1 { 1 } else { bonds[j] };
            sites.push(Array4::from_shape_fn((dl, dr, 4, 4), |_| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }));
        }
        Mpo::from_sites(sites).unwrap()
    }

    #[test]
    fn truncate_single_cut_error_equals_discarded_weight() {
        // only the middle bond exceeds the cap, so exactly one cut truncates
        let a = random_mpo_with_bonds(&[2, 4, 2], 77);
        let before = a.to_dense().unwrap();
        let mut b = a.clone();
        let report = b
            .truncate(&TruncationConfig {
                max_bond: Some(2),
                cutoff: 0.0,
            })
            .unwrap();
        let after = b.to_dense().unwrap();
        let err: f64 = (after.matrix() - before.matrix())
            .iter()
            .map(|z| z.norm_sqr())
            .sum();
        let total = report.total_discarded();
        assert!(
            (err - total).abs() <= 1e-10 * err.max(1.0),
            "gauge-exact identity violated: {err} vs {total}"
        );
        assert!(b.max_bond() <= 2);
    }

    #[test]
    fn apply_layer_matches_dense_composition() {
        let n = 4;
        let target = random_mpo(n, 3, 10);
        let layer = layer_from_local_ops(
            n,
            &[
                (0, cnot_superop().matrix().clone()),
                (2, gate1_superop(Gate1::H).matrix().clone()),
                (3, gate1_superop(Gate1::T).matrix().clone()),
            ],
        )
        .unwrap();
        let (prod, _) = apply_mpo_layer(&target, &layer, &TruncationConfig::default()).unwrap();
        let dense_prod = layer
            .to_dense()
            .unwrap()
            .compose(&target.to_dense().unwrap())
            .unwrap();
        assert!(relative_distance(&prod.to_dense().unwrap(), &dense_prod).unwrap() < 1e-20);
    }

    #[test]
    fn split_two_site_cnot_has_rank_four() {
        let cx = cnot_superop();
        let (l, r) = split_two_site_op(cx.matrix()).unwrap();
        assert_eq!(l.shape()[1], 4);
        // reassemble and compare
        let m = Mpo::from_sites(vec![l, r]).unwrap();
        assert!(relative_distance(&m.to_dense().unwrap(), &cx).unwrap() < 1e-24);
    }

    #[test]
    fn correlated_two_site_noise_splits_at_rank_two() {
        let s = make_noise_superop(NoiseKind::BitFlip, 2, 0.1).unwrap();
        let (l, _r) = split_two_site_op(s.matrix()).unwrap();
        // (1−ε)·1⊗1 + ε·(X⊗X)⊗(X⊗X)*: two product terms
        assert_eq!(l.shape()[1], 2);
    }

    #[test]
    fn relative_distance_mpo_matches_dense() {
        let a = random_mpo(4, 3, 20);
        let b = random_mpo(4, 3, 21);
        let d_tn = relative_distance_mpo(&a, &b).unwrap();
        let d_dense =
            relative_distance(&a.to_dense().unwrap(), &b.to_dense().unwrap()).unwrap();
        assert!((d_tn - d_dense).abs() < 1e-10 * d_dense.max(1.0));
    }

    #[test]
    fn trace_infidelity_mpo_matches_dense() {
        let a = random_mpo(3, 3, 30);
        let tn = trace_infidelity_mpo(&a);
        let dense = a.to_dense().unwrap().trace_infidelity();
        assert!((tn - dense).abs() < 1e-9 * dense.max(1.0));
        // TP example: identity has zero infidelity
        assert_eq!(trace_infidelity_mpo(&Mpo::identity(4).unwrap()), 0.0);
    }

    #[test]
    fn scaled_identity_trace_infidelity_is_quadratic() {
        let mut m = Mpo::identity(1).unwrap();
        m.scale(C64::new(1.0 + 1e-3, 0.0));
        let expect = 2.0 * 1e-6;
        // the three-term contraction cancels ~O(1) terms, so fp noise is ~1e-15
        assert!((trace_infidelity_mpo(&m) - expect).abs() < 1e-12);
    }
}
