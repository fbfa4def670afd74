//! Two-dimensional generalization: PEPO channels on a qubit grid.
//!
//! A [`Pepo`] is an `rows × cols` grid of rank-6 tensors with index order
//! (up, down, left, right, output leg τ, input leg σ); physical legs have
//! dimension 4 (one vectorized qubit), boundary virtual bonds dimension 1.
//! Qubit (r, c) maps to flat index `r·cols + c` with qubit 0 most
//! significant, so `to_dense` agrees with the grouped basis of
//! [`crate::dense`] and small grids can be checked against exact
//! superoperators.
//!
//! Unlike the chain case, norms, overlaps and alternating-least-squares
//! environments in 2D cannot be contracted exactly: every one is a planar
//! tensor network, which this module contracts as the evolution of a
//! boundary MPS — absorb one grid row at a time, compressing the MPS bond
//! to `chi` after each row. All derived quantities inherit that
//! approximation, so the module also exposes a top-to-bottom vs
//! left-to-right self-consistency check that flags an underpowered `chi`
//! instead of returning silently wrong numbers.
//!
//! The variational inverse reuses the chain objective: minimize
//! `‖U′U − 1‖²_F`, normalized by `‖1‖²_F = 4ⁿ`, over one site tensor at a
//! time. The per-site normal matrix keeps its `1₄ ⊗ M_small` block
//! structure (the output leg still only meets its own conjugate), but the
//! approximate environments can leave `M_small` slightly non-Hermitian or
//! indefinite; it is symmetrized and solved spectrally with negative
//! eigenvalues clipped, and per-site descent is only monotone up to the
//! environment error.

use ndarray::{Array1, Array2, Array3, Array4, Array6, ArrayD, Ix4, Ix6, IxDyn};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain;
use crate::channels::{
    cnot_superop, gate1_superop, make_noise_superop, sample_rate, Gate1, NoiseKind,
};
use crate::circuit::NoiseOp;
use crate::contract::{conj_view, into_matrix, permute_std, standardize, tensordot};
use crate::decomp::{svd_truncate, TruncationConfig};
use crate::dense::DenseSuperOp;
use crate::error::{Error, Result};
use crate::inverse::{quadratic_error, solve_spectral, InverseReport};
use crate::mpo::split_two_site_op;
use crate::rng::rng_for;

/// RNG stream label for 2D circuit generation.
const STREAM_GENERATE_2D: u64 = 31;

/// Boundary-MPS compression policy for contracting 2D networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryContractionConfig {
    /// Bond cap of the boundary MPS.
    pub chi: usize,
    /// Relative singular-value cutoff applied alongside the cap.
    pub cutoff: f64,
}

impl BoundaryContractionConfig {
    pub fn new(chi: usize) -> Self {
        Self {
            chi,
            cutoff: 1e-14,
        }
    }

    /// The default working precision for a PEPO of bond dimension `d`:
    /// `chi = d²`.
    pub fn for_bond(d: usize) -> Self {
        Self::new((d * d).max(1))
    }

    fn truncation(&self) -> TruncationConfig {
        TruncationConfig {
            max_bond: Some(self.chi.max(1)),
            cutoff: self.cutoff,
        }
    }

    fn check(&self) -> Result<()> {
        if self.chi == 0 {
            return Err(Error::InvalidConfig(
                "boundary MPS bond cap chi must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Projected entangled-pair operator on an `rows × cols` qubit grid.
#[derive(Debug, Clone)]
pub struct Pepo {
    rows: usize,
    cols: usize,
    sites: Vec<Array6<C64>>,
}

impl Pepo {
    /// Builds a PEPO from row-major site tensors (up, down, left, right,
    /// τ, σ), validating physical dimensions, unit boundary bonds, and
    /// neighbor bond agreement.
    pub fn from_sites(rows: usize, cols: usize, sites: Vec<Array6<C64>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("empty PEPO grid".into()));
        }
        if sites.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}×{cols} grid needs {} sites, got {}",
                rows * cols,
                sites.len()
            )));
        }
        let p = Self { rows, cols, sites };
        for r in 0..rows {
            for c in 0..cols {
                let s = p.site(r, c).shape();
                if s[4] != 4 || s[5] != 4 {
                    return Err(Error::DimensionMismatch(format!(
                        "site ({r},{c}) physical legs must be 4×4, got {}×{}",
                        s[4], s[5]
                    )));
                }
                let boundary = [
                    (r == 0, s[0], "up"),
                    (r == rows - 1, s[1], "down"),
                    (c == 0, s[2], "left"),
                    (c == cols - 1, s[3], "right"),
                ];
                for (edge, dim, name) in boundary {
                    if edge && dim != 1 {
                        return Err(Error::DimensionMismatch(format!(
                            "site ({r},{c}) {name} leg is on the grid edge but has \
                             dimension {dim}"
                        )));
                    }
                }
                if r + 1 < rows && s[1] != p.site(r + 1, c).shape()[0] {
                    return Err(Error::DimensionMismatch(format!(
                        "vertical bond mismatch below site ({r},{c}): {} vs {}",
                        s[1],
                        p.site(r + 1, c).shape()[0]
                    )));
                }
                if c + 1 < cols && s[3] != p.site(r, c + 1).shape()[2] {
                    return Err(Error::DimensionMismatch(format!(
                        "horizontal bond mismatch right of site ({r},{c}): {} vs {}",
                        s[3],
                        p.site(r, c + 1).shape()[2]
                    )));
                }
            }
        }
        Ok(p)
    }

    /// Identity map on the grid (all virtual bonds 1).
    pub fn identity(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("empty PEPO grid".into()));
        }
        let mut site = Array6::<C64>::zeros((1, 1, 1, 1, 4, 4));
        for p in 0..4 {
            site[[0, 0, 0, 0, p, p]] = C64::new(1.0, 0.0);
        }
        Ok(Self {
            rows,
            cols,
            sites: vec![site; rows * cols],
        })
    }

    /// Random PEPO with every internal bond equal to `bond`; entries are
    /// uniform complex scaled so site norms stay O(1).
    pub fn random<R: Rng>(rows: usize, cols: usize, bond: usize, rng: &mut R) -> Result<Self> {
        if rows == 0 || cols == 0 || bond == 0 {
            return Err(Error::DimensionMismatch("empty random PEPO".into()));
        }
        let mut sites = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let du = if r == 0 { 1 } else { bond };
                let dd = if r == rows - 1 { 1 } else { bond };
                let dl = if c == 0 { 1 } else { bond };
                let dr = if c == cols - 1 { 1 } else { bond };
                let scale = 1.0 / ((du * dd * dl * dr) as f64).sqrt();
                sites.push(Array6::from_shape_fn((du, dd, dl, dr, 4, 4), |_| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
                }));
            }
        }
        Ok(Self { rows, cols, sites })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn site(&self, r: usize, c: usize) -> &Array6<C64> {
        &self.sites[r * self.cols + c]
    }

    pub(crate) fn site_mut(&mut self, r: usize, c: usize) -> &mut Array6<C64> {
        &mut self.sites[r * self.cols + c]
    }

    /// Row-major site list (serialization order).
    pub fn sites(&self) -> &[Array6<C64>] {
        &self.sites
    }

    /// Largest virtual bond dimension anywhere on the grid.
    pub fn max_bond(&self) -> usize {
        self.sites
            .iter()
            .flat_map(|s| s.shape()[..4].to_vec())
            .max()
            .unwrap_or(1)
    }

    /// Hermitian adjoint: swaps the physical legs and conjugates.
    pub fn dagger(&self) -> Self {
        let sites = self
            .sites
            .iter()
            .map(|s| {
                standardize(s.view().permuted_axes([0, 1, 2, 3, 5, 4]).into_dyn())
                    .mapv(|z| z.conj())
                    .into_dimensionality::<Ix6>()
                    .expect("rank-6")
            })
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            sites,
        }
    }

    /// SVD-truncates one internal link under `cfg` by contracting the two
    /// adjoining sites and splitting them again with the singular values
    /// divided evenly. Without a 2D canonical form this is the standard
    /// "simple update" compromise: exact when only zero singular values
    /// drop, otherwise locally (not globally) optimal. Returns the
    /// discarded squared weight.
    fn truncate_link(
        &mut self,
        r: usize,
        c: usize,
        orientation: Orientation,
        cfg: &TruncationConfig,
    ) -> Result<f64> {
        let ((r2, c2), ax_a, ax_b) = match orientation {
            Orientation::Horizontal => ((r, c + 1), 3usize, 2usize),
            Orientation::Vertical => ((r + 1, c), 1usize, 0usize),
        };
        let ta = self.site(r, c).clone().into_dyn();
        let tb = self.site(r2, c2).clone().into_dyn();
        if ta.shape()[ax_a] <= 1 {
            return Ok(0.0);
        }
        // group the link axis last on A, first on B, then SVD the product
        let mut perm_a: Vec<usize> = (0..6).filter(|&x| x != ax_a).collect();
        perm_a.push(ax_a);
        let mut perm_b: Vec<usize> = vec![ax_b];
        perm_b.extend((0..6).filter(|&x| x != ax_b));
        let a_shape: Vec<usize> = perm_a.iter().map(|&x| ta.shape()[x]).collect();
        let b_shape: Vec<usize> = perm_b.iter().map(|&x| tb.shape()[x]).collect();
        let am = into_matrix(permute_std(ta, &perm_a), 5);
        let bm = into_matrix(permute_std(tb, &perm_b), 1);
        let t = svd_truncate(&am.dot(&bm), cfg)?;
        let k = t.s.len();
        let sq: Vec<f64> = t.s.iter().map(|s| s.sqrt()).collect();
        let mut u = t.u;
        for (i, &s) in sq.iter().enumerate() {
            u.column_mut(i).mapv_inplace(|z| z * s);
        }
        let mut vt = t.vt;
        for (i, &s) in sq.iter().enumerate() {
            vt.row_mut(i).mapv_inplace(|z| z * s);
        }
        // undo the axis grouping with the new bond dimension k
        let mut na_shape = a_shape;
        *na_shape.last_mut().expect("6 axes") = k;
        let mut inv_a = vec![0usize; 6];
        for (pos, &ax) in perm_a.iter().enumerate() {
            inv_a[ax] = pos;
        }
        let ua = permute_std(
            u.into_shape_with_order(IxDyn(&na_shape))?,
            &inv_a,
        );
        let mut nb_shape = b_shape;
        nb_shape[0] = k;
        let mut inv_b = vec![0usize; 6];
        for (pos, &ax) in perm_b.iter().enumerate() {
            inv_b[ax] = pos;
        }
        let vb = permute_std(
            vt.into_shape_with_order(IxDyn(&nb_shape))?,
            &inv_b,
        );
        *self.site_mut(r, c) = ua.into_dimensionality::<Ix6>().expect("rank-6");
        *self.site_mut(r2, c2) = vb.into_dimensionality::<Ix6>().expect("rank-6");
        Ok(t.discarded)
    }

    /// Contracts the grid into its dense superoperator (small grids only).
    pub fn to_dense(&self) -> Result<DenseSuperOp> {
        let n = self.n_sites();
        if n > crate::dense::DENSE_SUPEROP_QUBIT_CAP {
            return Err(Error::DenseCapExceeded {
                limit: crate::dense::DENSE_SUPEROP_QUBIT_CAP,
                requested: n,
            });
        }
        // fold each row over its horizontal bonds, then stack rows over
        // the vertical ones; physical legs ride along fused to 16 per site
        let mut vacc: Option<ArrayD<C64>> = None; // (p…, down-bonds fused)
        for r in 0..self.rows {
            let mut acc = ArrayD::<C64>::ones(IxDyn(&[1, 1, 1])); // (Uf, Df, rb)
            for c in 0..self.cols {
                let s = self.site(r, c);
                let (u, d) = (s.shape()[0], s.shape()[1]);
                let (l, rr) = (s.shape()[2], s.shape()[3]);
                let s5 = standardize(s.view().into_dyn())
                    .into_shape_with_order(IxDyn(&[u, d, l, rr, 16]))
                    .expect("fuse physical legs");
                let last = acc.ndim() - 1;
                let t = tensordot(acc.view(), s5.view(), &[last], &[2]);
                // (Uf, Df, p…, u, d, r, p_c) → (Uf·u, Df·d, p…, p_c, r)
                let np = t.ndim() - 6; // accumulated physical legs
                let mut perm = vec![0, 2 + np, 1, 3 + np];
                perm.extend(2..2 + np);
                perm.push(5 + np);
                perm.push(4 + np);
                let tp = permute_std(t, &perm);
                let mut shape: Vec<usize> = vec![tp.shape()[0] * tp.shape()[1], tp.shape()[2] * tp.shape()[3]];
                shape.extend(std::iter::repeat(16).take(np + 1));
                shape.push(rr);
                acc = tp.into_shape_with_order(IxDyn(&shape)).expect("row fold");
            }
            // right boundary bond is 1; drop it, leaving (Uf, Df, p…)
            let mut shape: Vec<usize> = acc.shape()[..acc.ndim() - 1].to_vec();
            let row = acc.into_shape_with_order(IxDyn(&shape)).expect("drop bond");
            vacc = Some(match vacc {
                None => {
                    // top boundary fused bond is 1: (Df, p…) → (p…, Df)
                    shape = row.shape()[1..].to_vec();
                    let m = row.into_shape_with_order(IxDyn(&shape)).expect("drop top");
                    let np = m.ndim() - 1;
                    let mut perm: Vec<usize> = (1..=np).collect();
                    perm.insert(np, 0);
                    permute_std(m, &perm)
                }
                Some(prev) => {
                    let last = prev.ndim() - 1;
                    let t = tensordot(prev.view(), row.view(), &[last], &[0]);
                    // (p_old…, Df, p_new…) → (p_old…, p_new…, Df)
                    let total = t.ndim();
                    let old = last;
                    let mut perm: Vec<usize> = (0..old).collect();
                    perm.extend(old + 1..total);
                    perm.push(old);
                    permute_std(t, &perm)
                }
            });
        }
        let full = vacc.expect("at least one row");
        // bottom fused bond is 1; split each 16 into (τ, σ) and group all
        // τ legs before all σ legs, exactly as the chain case does
        let interleaved = full
            .into_shape_with_order(IxDyn(&vec![4; 2 * n]))
            .expect("interleaved legs");
        let mut perm = Vec::with_capacity(2 * n);
        perm.extend((0..n).map(|j| 2 * j));
        perm.extend((0..n).map(|j| 2 * j + 1));
        let dim = 1usize << (2 * n);
        let mat = standardize(interleaved.permuted_axes(IxDyn(&perm)).view())
            .into_shape_with_order((dim, dim))
            .expect("matrix reshape")
            .into_dimensionality()
            .expect("rank-2");
        DenseSuperOp::from_matrix(n, mat)
    }

    /// Squared Frobenius norm via top-to-bottom boundary contraction.
    pub fn norm_sq(&self, cfg: &BoundaryContractionConfig) -> Result<f64> {
        Ok(pepo_inner(self, self, cfg)?.re.max(0.0))
    }

    /// The squared norm contracted both top-to-bottom and left-to-right.
    /// The two sweeps truncate different bonds, so their disagreement
    /// measures how much the boundary compression at this `chi` distorts
    /// the network; agreement within ~1% is the working threshold.
    pub fn norm_consistency(&self, cfg: &BoundaryContractionConfig) -> Result<(f64, f64)> {
        let grid = overlap_grid(self, self)?;
        let tb = contract_grid(&grid, cfg)?.re.max(0.0);
        let lr = contract_grid(&grid.transposed(), cfg)?.re.max(0.0);
        Ok((tb, lr))
    }
}

/// Hilbert–Schmidt pairing Σ a·conj(b) evaluated by boundary contraction.
pub fn pepo_inner(a: &Pepo, b: &Pepo, cfg: &BoundaryContractionConfig) -> Result<C64> {
    contract_grid(&overlap_grid(a, b)?, cfg)
}

/// Relative Frobenius distance ‖a − b‖²_F / √(‖a‖²‖b‖²) between grid
/// operators, evaluated from three boundary contractions.
pub fn relative_distance_pepo(
    a: &Pepo,
    b: &Pepo,
    cfg: &BoundaryContractionConfig,
) -> Result<f64> {
    let na = a.norm_sq(cfg)?;
    let nb = b.norm_sq(cfg)?;
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DimensionMismatch(
            "relative distance undefined for zero-norm operators".into(),
        ));
    }
    let cross = pepo_inner(a, b, cfg)?;
    Ok((na + nb - 2.0 * cross.re).max(0.0) / (na * nb).sqrt())
}

/// Squared deviation from trace preservation, |⟨⟨1| − ⟨⟨1|M|², with the
/// row vector ⟨⟨1| carrying the per-site pattern (1, 0, 0, 1).
pub fn trace_infidelity_pepo(m: &Pepo, cfg: &BoundaryContractionConfig) -> Result<f64> {
    let n = m.n_sites();
    let t1 = 2f64.powi(n as i32);
    let t2 = contract_grid(&ones_row_grid(m), cfg)?;
    let t3 = contract_grid(&ones_row_sq_grid(m), cfg)?;
    Ok((t1 - 2.0 * t2.re + t3.re).max(0.0))
}

/// Operator product `after ∘ before` as a PEPO: per-site physical
/// contraction with fused virtual bonds, then one simple-update truncation
/// pass over every link under `cfg`.
pub fn pepo_compose(after: &Pepo, before: &Pepo, cfg: &TruncationConfig) -> Result<Pepo> {
    if after.rows != before.rows || after.cols != before.cols {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose {}×{} with {}×{} grids",
            after.rows, after.cols, before.rows, before.cols
        )));
    }
    let mut sites = Vec::with_capacity(after.n_sites());
    for r in 0..after.rows {
        for c in 0..after.cols {
            let x = after.site(r, c).view().into_dyn();
            let y = before.site(r, c).view().into_dyn();
            let t = tensordot(x.view(), y.view(), &[5], &[4]);
            // (u₁,d₁,l₁,r₁,τ, u₂,d₂,l₂,r₂,σ) → fused pairs
            let tp = permute_std(t, &[0, 5, 1, 6, 2, 7, 3, 8, 4, 9]);
            let s = tp.shape().to_vec();
            let fused = tp
                .into_shape_with_order(IxDyn(&[
                    s[0] * s[1],
                    s[2] * s[3],
                    s[4] * s[5],
                    s[6] * s[7],
                    4,
                    4,
                ]))
                .expect("fuse bonds");
            sites.push(fused.into_dimensionality::<Ix6>().expect("rank-6"));
        }
    }
    let mut out = Pepo::from_sites(after.rows, after.cols, sites)?;
    for r in 0..out.rows {
        for c in 0..out.cols {
            if c + 1 < out.cols {
                out.truncate_link(r, c, Orientation::Horizontal, cfg)?;
            }
            if r + 1 < out.rows {
                out.truncate_link(r, c, Orientation::Vertical, cfg)?;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// 2D circuits

/// Which way a two-qubit layer couples neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleQubitGate2d {
    pub row: usize,
    pub col: usize,
    pub gate: Gate1,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseOp>,
}

/// CNOT with control at (row, col); the target is the right or down
/// neighbor per the layer's orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitGate2d {
    pub row: usize,
    pub col: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec2d {
    SingleQubit {
        gates: Vec<SingleQubitGate2d>,
    },
    TwoQubit {
        orientation: Orientation,
        gates: Vec<TwoQubitGate2d>,
    },
}

/// A 2D circuit: grid dimensions, generating seed, layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec2d {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub layers: Vec<LayerSpec2d>,
}

impl CircuitSpec2d {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    fn flat(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    /// Structural checks: indices in range, CNOT targets on the grid, no
    /// qubit acted on twice within a layer.
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidCircuit(format!(
                "2D circuits need a grid of at least 2×2, got {}×{}",
                self.rows, self.cols
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let mut used = vec![false; self.rows * self.cols];
            let mut mark = |r: usize, c: usize| -> Result<()> {
                if r >= self.rows || c >= self.cols {
                    return Err(Error::InvalidCircuit(format!(
                        "layer {l}: site ({r},{c}) outside the {}×{} grid",
                        self.rows, self.cols
                    )));
                }
                let q = r * self.cols + c;
                if used[q] {
                    return Err(Error::InvalidCircuit(format!(
                        "layer {l}: site ({r},{c}) acted on twice"
                    )));
                }
                used[q] = true;
                Ok(())
            };
            match layer {
                LayerSpec2d::SingleQubit { gates } => {
                    for g in gates {
                        mark(g.row, g.col)?;
                    }
                }
                LayerSpec2d::TwoQubit { orientation, gates } => {
                    for g in gates {
                        let (tr, tc) = match orientation {
                            Orientation::Horizontal => (g.row, g.col + 1),
                            Orientation::Vertical => (g.row + 1, g.col),
                        };
                        mark(g.row, g.col)?;
                        mark(tr, tc)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generates the 2D benchmark circuit: even layers are random single-qubit
/// gates on every site, odd layers are CNOTs whose direction alternates
/// between horizontal and vertical from one odd layer to the next.
/// Depolarizing noise follows every gate, with mean rate `eps_two` for
/// CNOTs and `eps_two / 10` for single-qubit gates, each drawn uniformly
/// from ±20% around its mean; `eps_two = 0` generates a noiseless circuit.
pub fn generate_test_circuit_2d(
    rows: usize,
    cols: usize,
    depth: usize,
    seed: u64,
    eps_two: f64,
) -> Result<CircuitSpec2d> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidCircuit(format!(
            "2D circuits need a grid of at least 2×2, got {rows}×{cols}"
        )));
    }
    if depth == 0 {
        return Err(Error::InvalidCircuit("depth must be at least 1".into()));
    }
    let mut rng = rng_for(seed, STREAM_GENERATE_2D);
    let eps_one = eps_two / 10.0;
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        if l % 2 == 0 {
            let mut gates = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    gates.push(SingleQubitGate2d {
                        row: r,
                        col: c,
                        gate: Gate1::ALL[rng.gen_range(0..4)],
                        noise: draw_depolarizing(&mut rng, eps_one),
                    });
                }
            }
            layers.push(LayerSpec2d::SingleQubit { gates });
        } else {
            let orientation = if (l / 2) % 2 == 0 {
                Orientation::Horizontal
            } else {
                Orientation::Vertical
            };
            let mut gates = Vec::new();
            match orientation {
                Orientation::Horizontal => {
                    for r in 0..rows {
                        let mut c = 0;
                        while c + 1 < cols {
                            gates.push(TwoQubitGate2d {
                                row: r,
                                col: c,
                                noise: draw_depolarizing(&mut rng, eps_two),
                            });
                            c += 2;
                        }
                    }
                }
                Orientation::Vertical => {
                    for c in 0..cols {
                        let mut r = 0;
                        while r + 1 < rows {
                            gates.push(TwoQubitGate2d {
                                row: r,
                                col: c,
                                noise: draw_depolarizing(&mut rng, eps_two),
                            });
                            r += 2;
                        }
                    }
                }
            }
            layers.push(LayerSpec2d::TwoQubit { orientation, gates });
        }
    }
    Ok(CircuitSpec2d {
        rows,
        cols,
        seed,
        layers,
    })
}

fn draw_depolarizing<R: Rng>(rng: &mut R, mean: f64) -> Option<NoiseOp> {
    (mean > 0.0).then(|| NoiseOp {
        kind: NoiseKind::Depolarizing,
        rate: sample_rate(mean, rng),
    })
}

/// Absorbs a one-site superoperator into a grid tensor (op acts after).
fn absorb_one_site(t: &Array6<C64>, op: &Array2<C64>) -> Array6<C64> {
    let c = tensordot(op.view().into_dyn(), t.view().into_dyn(), &[1], &[4]);
    // (τ′, u, d, l, r, σ) → (u, d, l, r, τ′, σ)
    permute_std(c, &[1, 2, 3, 4, 0, 5])
        .into_dimensionality::<Ix6>()
        .expect("rank-6")
}

/// Absorbs one factor of a split two-site superoperator into a grid
/// tensor, fusing the factor's bond into the virtual leg `bond_axis`
/// with (existing, new) ordering — identical on both sides of a link, so
/// the fused bonds still pair up.
fn absorb_factor(t: &Array6<C64>, f: &Array3<C64>, bond_axis: usize) -> Array6<C64> {
    let c = tensordot(t.view().into_dyn(), f.view().into_dyn(), &[4], &[2]);
    // (u, d, l, r, σ, b, τ′) → virtual legs with b spliced in, then (τ′, σ)
    let mut perm = Vec::with_capacity(7);
    for ax in 0..4 {
        perm.push(ax);
        if ax == bond_axis {
            perm.push(5);
        }
    }
    perm.push(6);
    perm.push(4);
    let tp = permute_std(c, &perm);
    let mut shape: Vec<usize> = (0..4).map(|ax| t.shape()[ax]).collect();
    shape[bond_axis] *= f.shape()[0];
    shape.push(4);
    shape.push(4);
    tp.into_shape_with_order(IxDyn(&shape))
        .expect("fuse factor bond")
        .into_dimensionality::<Ix6>()
        .expect("rank-6")
}

/// Contracts a 2D circuit into a PEPO by absorbing it layer by layer; each
/// two-qubit layer is followed by a truncation pass over the links it
/// touched, governed by `cfg`. Returns the PEPO and the total discarded
/// squared weight.
pub fn pepo_from_circuit_2d(
    spec: &CircuitSpec2d,
    noisy: bool,
    cfg: &TruncationConfig,
) -> Result<(Pepo, f64)> {
    spec.validate()?;
    let mut p = Pepo::identity(spec.rows, spec.cols)?;
    let mut discarded = 0.0;
    for layer in &spec.layers {
        match layer {
            LayerSpec2d::SingleQubit { gates } => {
                for g in gates {
                    let mut op = gate1_superop(g.gate).matrix().clone();
                    if noisy {
                        if let Some(nz) = g.noise {
                            op = make_noise_superop(nz.kind, 1, nz.rate)?.matrix().dot(&op);
                        }
                    }
                    let site = p.site(g.row, g.col).clone();
                    *p.site_mut(g.row, g.col) = absorb_one_site(&site, &op);
                }
            }
            LayerSpec2d::TwoQubit { orientation, gates } => {
                for g in gates {
                    let mut op = cnot_superop().matrix().clone();
                    if noisy {
                        if let Some(nz) = g.noise {
                            op = make_noise_superop(nz.kind, 2, nz.rate)?.matrix().dot(&op);
                        }
                    }
                    let (lf, rf) = split_two_site_op(&op)?;
                    // drop the unit outer bonds: (b, τ, σ) factors
                    let k = lf.shape()[1];
                    let lf3 = lf
                        .into_shape_with_order((k, 4, 4))
                        .expect("left factor");
                    let rf3 = rf
                        .into_shape_with_order((k, 4, 4))
                        .expect("right factor");
                    let ((r2, c2), ax_a, ax_b) = match orientation {
                        Orientation::Horizontal => ((g.row, g.col + 1), 3, 2),
                        Orientation::Vertical => ((g.row + 1, g.col), 1, 0),
                    };
                    let sa = p.site(g.row, g.col).clone();
                    *p.site_mut(g.row, g.col) = absorb_factor(&sa, &lf3, ax_a);
                    let sb = p.site(r2, c2).clone();
                    *p.site_mut(r2, c2) = absorb_factor(&sb, &rf3, ax_b);
                }
                for g in gates {
                    discarded += p.truncate_link(g.row, g.col, *orientation, cfg)?;
                }
            }
        }
    }
    Ok((p, discarded))
}

/// Dense reference compilation of a 2D circuit (small grids): exact
/// superoperator with or without the noise attachments.
pub fn compile_dense_2d(spec: &CircuitSpec2d, noisy: bool) -> Result<DenseSuperOp> {
    spec.validate()?;
    let n = spec.rows * spec.cols;
    let mut acc = DenseSuperOp::identity(n)?;
    for layer in &spec.layers {
        match layer {
            LayerSpec2d::SingleQubit { gates } => {
                for g in gates {
                    let mut op = gate1_superop(g.gate).matrix().clone();
                    if noisy {
                        if let Some(nz) = g.noise {
                            op = make_noise_superop(nz.kind, 1, nz.rate)?.matrix().dot(&op);
                        }
                    }
                    acc.apply_local(&op, spec.flat(g.row, g.col))?;
                }
            }
            LayerSpec2d::TwoQubit { orientation, gates } => {
                for g in gates {
                    let mut op = cnot_superop().matrix().clone();
                    if noisy {
                        if let Some(nz) = g.noise {
                            op = make_noise_superop(nz.kind, 2, nz.rate)?.matrix().dot(&op);
                        }
                    }
                    let q1 = spec.flat(g.row, g.col);
                    let q2 = match orientation {
                        Orientation::Horizontal => q1 + 1,
                        Orientation::Vertical => q1 + spec.cols,
                    };
                    if q2 == q1 + 1 {
                        acc.apply_local(&op, q1)?;
                    } else {
                        acc = apply_two_site_dense(&acc, &op, q1, q2)?;
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// Left-multiplies a grouped two-site superoperator acting on arbitrary
/// (not necessarily adjacent) qubits `q1 < q2` onto a dense map.
fn apply_two_site_dense(
    acc: &DenseSuperOp,
    op: &Array2<C64>,
    q1: usize,
    q2: usize,
) -> Result<DenseSuperOp> {
    let n = acc.n_qubits();
    if q2 >= n || q1 >= q2 {
        return Err(Error::DimensionMismatch(format!(
            "two-site op on qubits {q1},{q2} of {n}"
        )));
    }
    let dim = acc.dim();
    let mut shape = vec![4usize; n];
    shape.push(dim);
    let t = acc
        .matrix()
        .clone()
        .into_shape_with_order(IxDyn(&shape))
        .expect("split row index");
    let o = op
        .clone()
        .into_shape_with_order(IxDyn(&[4, 4, 4, 4]))
        .expect("split op");
    let prod = tensordot(o.view(), t.view(), &[2, 3], &[q1, q2]);
    // (τ₁′, τ₂′, remaining rows…, col) → reinsert at q1 and q2
    let mut perm = Vec::with_capacity(n + 1);
    let mut next_rest = 2;
    for i in 0..n {
        if i == q1 {
            perm.push(0);
        } else if i == q2 {
            perm.push(1);
        } else {
            perm.push(next_rest);
            next_rest += 1;
        }
    }
    perm.push(n);
    let mat = standardize(prod.permuted_axes(IxDyn(&perm)).view())
        .into_shape_with_order((dim, dim))
        .expect("matrix reshape")
        .into_dimensionality()
        .expect("rank-2");
    DenseSuperOp::from_matrix(n, mat)
}

// ---------------------------------------------------------------------------
// Boundary-MPS contraction of layered grid networks

/// A grid of rank-4 closed nodes (up, down, left, right): a 2D tensor
/// network with no physical legs left, ready for boundary contraction.
struct NodeGrid {
    rows: usize,
    cols: usize,
    nodes: Vec<ArrayD<C64>>,
}

impl NodeGrid {
    fn node(&self, r: usize, c: usize) -> &ArrayD<C64> {
        &self.nodes[r * self.cols + c]
    }

    fn set_node(&mut self, r: usize, c: usize, t: ArrayD<C64>) {
        self.nodes[r * self.cols + c] = t;
    }

    /// The same network with rows and columns exchanged, for contracting
    /// in the transverse direction.
    fn transposed(&self) -> NodeGrid {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                nodes.push(permute_std(self.node(r, c).clone(), &[2, 3, 0, 1]));
            }
        }
        NodeGrid {
            rows: self.cols,
            cols: self.rows,
            nodes,
        }
    }
}

fn fuse_pairs(t: ArrayD<C64>, perm: &[usize], groups: usize) -> ArrayD<C64> {
    let tp = permute_std(t, perm);
    let per = perm.len() / groups;
    let shape: Vec<usize> = (0..groups)
        .map(|g| tp.shape()[g * per..(g + 1) * per].iter().product())
        .collect();
    tp.into_shape_with_order(IxDyn(&shape)).expect("fuse layers")
}

/// Node of the pairing network Σ a·conj(b): layers fused (a, b) per leg.
fn overlap_node(a: &Array6<C64>, b: &Array6<C64>) -> ArrayD<C64> {
    let bc = conj_view(b.view().into_dyn());
    let t = tensordot(a.view().into_dyn(), bc.view(), &[4, 5], &[4, 5]);
    fuse_pairs(t, &[0, 4, 1, 5, 2, 6, 3, 7], 4)
}

/// Node of the trace network Tr[G·A]: Σ_{x,y} g[..,x,y]·a[..,y,x], layers
/// fused (g, a) per leg.
fn trace_product_node(g: &Array6<C64>, a: &Array6<C64>) -> ArrayD<C64> {
    let t = tensordot(g.view().into_dyn(), a.view().into_dyn(), &[4, 5], &[5, 4]);
    fuse_pairs(t, &[0, 4, 1, 5, 2, 6, 3, 7], 4)
}

/// Node of the four-layer network Tr[G A A† G†]: layers fused in the order
/// (guess, target, conj target, conj guess) per leg.
fn four_node(g: &Array6<C64>, a: &Array6<C64>) -> ArrayD<C64> {
    let gd = conj_view(g.view().into_dyn());
    let ad = conj_view(a.view().into_dyn());
    // G and G† share the output leg; A and A† share the input leg
    let gg = tensordot(g.view().into_dyn(), gd.view(), &[4], &[4]);
    // (u_a,d_a,l_a,r_a, y, u_d,d_d,l_d,r_d, w)
    let aa = tensordot(a.view().into_dyn(), ad.view(), &[5], &[5]);
    // (u_b,d_b,l_b,r_b, y′, u_c,d_c,l_c,r_c, w′)
    let t = tensordot(gg.view(), aa.view(), &[4, 9], &[4, 9]);
    // (a-legs, d-legs, b-legs, c-legs) → (u,d,l,r) each fused (a,b,c,d)
    fuse_pairs(
        t,
        &[0, 8, 12, 4, 1, 9, 13, 5, 2, 10, 14, 6, 3, 11, 15, 7],
        4,
    )
}

fn overlap_grid(a: &Pepo, b: &Pepo) -> Result<NodeGrid> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::DimensionMismatch(format!(
            "pairing between {}×{} and {}×{} grids",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let nodes = a
        .sites
        .iter()
        .zip(&b.sites)
        .map(|(x, y)| overlap_node(x, y))
        .collect();
    Ok(NodeGrid {
        rows: a.rows,
        cols: a.cols,
        nodes,
    })
}

/// Network for ⟨⟨1|M|1⟩⟩-style traces: per site Σ_{τ,σ∈{0,3}} m[..,τ,σ].
fn ones_row_grid(m: &Pepo) -> NodeGrid {
    let nodes = m
        .sites
        .iter()
        .map(|s| {
            let mut w = ArrayD::<C64>::zeros(IxDyn(&s.shape()[..4]));
            for &tau in &[0usize, 3] {
                for &sig in &[0usize, 3] {
                    w += &s
                        .view()
                        .index_axis(ndarray::Axis(5), sig)
                        .index_axis(ndarray::Axis(4), tau)
                        .into_dyn();
                }
            }
            w
        })
        .collect();
    NodeGrid {
        rows: m.rows,
        cols: m.cols,
        nodes,
    }
}

/// Network for |⟨⟨1|M|²: per site Σ_σ v⊗conj(v) with v = Σ_{τ∈{0,3}} m.
fn ones_row_sq_grid(m: &Pepo) -> NodeGrid {
    let nodes = m
        .sites
        .iter()
        .map(|s| {
            let sh = s.shape();
            let mut v = ArrayD::<C64>::zeros(IxDyn(&[sh[0], sh[1], sh[2], sh[3], 4]));
            for &tau in &[0usize, 3] {
                v += &s.view().index_axis(ndarray::Axis(4), tau).into_dyn();
            }
            let vc = conj_view(v.view());
            let t = tensordot(v.view(), vc.view(), &[4], &[4]);
            fuse_pairs(t, &[0, 4, 1, 5, 2, 6, 3, 7], 4)
        })
        .collect();
    NodeGrid {
        rows: m.rows,
        cols: m.cols,
        nodes,
    }
}

fn ones_mps(cols: usize) -> Vec<Array3<C64>> {
    vec![Array3::ones((1, 1, 1)); cols]
}

/// One grid row as a 1D operator layer for the boundary MPS: node
/// (u, d, l, r) → site (l, r, outgoing leg, incoming leg), where the
/// incoming leg faces the sweep origin.
fn row_layer(grid: &NodeGrid, r: usize, downward: bool) -> Vec<Array4<C64>> {
    (0..grid.cols)
        .map(|c| {
            let perm = if downward { [2, 3, 1, 0] } else { [2, 3, 0, 1] };
            permute_std(grid.node(r, c).clone(), &perm)
                .into_dimensionality::<Ix4>()
                .expect("rank-4 node")
        })
        .collect()
}

/// Absorbs one grid row into a boundary MPS, compressing under `cfg`.
fn evolve_boundary(
    mps: &[Array3<C64>],
    grid: &NodeGrid,
    r: usize,
    downward: bool,
    cfg: &TruncationConfig,
) -> Result<Vec<Array3<C64>>> {
    let layer = row_layer(grid, r, downward);
    let target: Vec<Array4<C64>> = mps
        .iter()
        .map(|s| {
            let sh = s.shape();
            s.clone()
                .into_shape_with_order((sh[0], sh[1], sh[2], 1))
                .expect("state leg")
        })
        .collect();
    let (out, _) = chain::zip_apply(&layer, &target, cfg)?;
    Ok(out
        .into_iter()
        .map(|s| {
            let sh = s.shape().to_vec();
            s.into_shape_with_order((sh[0], sh[1], sh[2]))
                .expect("drop state leg")
        })
        .collect())
}

/// Final contraction of a boundary MPS whose physical legs have all
/// collapsed to dimension 1.
fn collapse_boundary(mps: &[Array3<C64>]) -> C64 {
    let mut e = ArrayD::<C64>::ones(IxDyn(&[1]));
    for s in mps {
        e = tensordot(e.view(), s.view().into_dyn(), &[0], &[0]);
        let sh = e.shape().to_vec();
        e = e
            .into_shape_with_order(IxDyn(&[sh[0]]))
            .expect("unit physical leg");
    }
    e[IxDyn(&[0])]
}

/// Contracts a closed grid network to a scalar, top to bottom.
fn contract_grid(grid: &NodeGrid, cfg: &BoundaryContractionConfig) -> Result<C64> {
    cfg.check()?;
    let tcfg = cfg.truncation();
    let mut mps = ones_mps(grid.cols);
    for r in 0..grid.rows {
        mps = evolve_boundary(&mps, grid, r, true, &tcfg)?;
    }
    Ok(collapse_boundary(&mps))
}

/// Boundary MPSs absorbed from the top: entry `r` holds rows `0..=r`.
fn tops(grid: &NodeGrid, cfg: &TruncationConfig) -> Result<Vec<Vec<Array3<C64>>>> {
    let mut out = Vec::with_capacity(grid.rows);
    let mut mps = ones_mps(grid.cols);
    for r in 0..grid.rows {
        mps = evolve_boundary(&mps, grid, r, true, cfg)?;
        out.push(mps.clone());
    }
    Ok(out)
}

/// Boundary MPSs absorbed from the bottom: entry `r` holds rows `r..`.
fn bottoms(grid: &NodeGrid, cfg: &TruncationConfig) -> Result<Vec<Vec<Array3<C64>>>> {
    let mut out = vec![Vec::new(); grid.rows];
    let mut mps = ones_mps(grid.cols);
    for r in (0..grid.rows).rev() {
        mps = evolve_boundary(&mps, grid, r, false, cfg)?;
        out[r] = mps.clone();
    }
    Ok(out)
}

/// Three-chain transfer step rightward: the left environment (top bond,
/// open horizontal leg, bottom bond) absorbs column `c` of the sandwich
/// top MPS · grid row · bottom MPS.
fn sandwich_step_right(
    lenv: &ArrayD<C64>,
    top: &Array3<C64>,
    node: &ArrayD<C64>,
    bot: &Array3<C64>,
) -> ArrayD<C64> {
    let x1 = tensordot(lenv.view(), top.view().into_dyn(), &[0], &[0]); // (l, b, t′, p_u)
    let x2 = tensordot(x1.view(), node.view(), &[0, 3], &[2, 0]); // (b, t′, d, r)
    tensordot(x2.view(), bot.view().into_dyn(), &[0, 2], &[0, 2]) // (t′, r, b′)
}

/// Mirror transfer leftward for the right environment.
fn sandwich_step_left(
    renv: &ArrayD<C64>,
    top: &Array3<C64>,
    node: &ArrayD<C64>,
    bot: &Array3<C64>,
) -> ArrayD<C64> {
    let y1 = tensordot(top.view().into_dyn(), renv.view(), &[1], &[0]); // (t, p_u, l_open, b)
    let y2 = tensordot(node.view(), y1.view(), &[3, 0], &[2, 1]); // (d, l, t, b)
    let y3 = tensordot(y2.view(), bot.view().into_dyn(), &[0, 3], &[2, 1]); // (l, t, b′)
    permute_std(y3, &[1, 0, 2])
}

/// Right environments of a sandwiched row: entry `c` holds columns `c..`,
/// with `cols` mapping to the trivial environment.
fn sandwich_renvs(
    top: &[Array3<C64>],
    row: &[ArrayD<C64>],
    bot: &[Array3<C64>],
) -> Vec<ArrayD<C64>> {
    let cols = row.len();
    let mut out = vec![ArrayD::<C64>::ones(IxDyn(&[1, 1, 1])); cols + 1];
    for c in (0..cols).rev() {
        out[c] = sandwich_step_left(&out[c + 1], &top[c], &row[c], &bot[c]);
    }
    out
}

/// Left environments of a sandwiched row: entry `c` holds columns `..c`.
fn sandwich_lenvs(
    top: &[Array3<C64>],
    row: &[ArrayD<C64>],
    bot: &[Array3<C64>],
) -> Vec<ArrayD<C64>> {
    let cols = row.len();
    let mut out = vec![ArrayD::<C64>::ones(IxDyn(&[1, 1, 1])); cols + 1];
    for c in 0..cols {
        out[c + 1] = sandwich_step_right(&out[c], &top[c], &row[c], &bot[c]);
    }
    out
}

/// Environment of one grid node: everything else contracted, leaving the
/// node's (up, down, left, right) legs open.
fn hole_env(
    lenv: &ArrayD<C64>,
    renv: &ArrayD<C64>,
    top: &Array3<C64>,
    bot: &Array3<C64>,
) -> ArrayD<C64> {
    let z1 = tensordot(lenv.view(), top.view().into_dyn(), &[0], &[0]); // (l, b, t′, u)
    let z2 = tensordot(z1.view(), bot.view().into_dyn(), &[1], &[0]); // (l, t′, u, b′, d)
    let z3 = tensordot(z2.view(), renv.view(), &[1, 3], &[0, 2]); // (l, u, d, r)
    permute_std(z3, &[1, 2, 0, 3])
}

// ---------------------------------------------------------------------------
// Variational PEPO inverse

/// Sweep state for fitting `U′ ≈ u⁻¹` on a grid: the target, the current
/// guess, and the two layered networks (quartic and linear) whose
/// environments drive the per-site solves. Environments come from boundary
/// MPS caches rebuilt once per row visit, so a full sweep touches each row
/// contraction a constant number of times.
pub struct PepoInverseWorkspace {
    target: Pepo,
    guess: Pepo,
    bcfg: BoundaryContractionConfig,
    grid4: NodeGrid,
    grid2: NodeGrid,
    last_error: f64,
    sweeps_done: usize,
}

impl PepoInverseWorkspace {
    /// Builds a workspace starting from the site-wise adjoint of the
    /// target, truncated to the requested bond dimension. Construction
    /// fails if the boundary contraction at this `chi` cannot even
    /// reproduce the quartic network's norm consistently between sweep
    /// directions (1% threshold) — a too-small `chi` would otherwise
    /// produce silently wrong environments.
    pub fn new(target: &Pepo, bond: usize, bcfg: &BoundaryContractionConfig) -> Result<Self> {
        if bond == 0 {
            return Err(Error::DimensionMismatch(
                "inverse bond dimension must be at least 1".into(),
            ));
        }
        let mut guess = target.dagger();
        let cap = TruncationConfig::with_max_bond(bond);
        for r in 0..guess.rows {
            for c in 0..guess.cols {
                if c + 1 < guess.cols && guess.site(r, c).shape()[3] > bond {
                    guess.truncate_link(r, c, Orientation::Horizontal, &cap)?;
                }
                if r + 1 < guess.rows && guess.site(r, c).shape()[1] > bond {
                    guess.truncate_link(r, c, Orientation::Vertical, &cap)?;
                }
            }
        }
        Self::with_guess(target, guess, bcfg)
    }

    /// Builds a workspace around an explicit starting guess.
    pub fn with_guess(
        target: &Pepo,
        guess: Pepo,
        bcfg: &BoundaryContractionConfig,
    ) -> Result<Self> {
        bcfg.check()?;
        if guess.rows != target.rows || guess.cols != target.cols {
            return Err(Error::DimensionMismatch(format!(
                "guess grid {}×{} does not match target {}×{}",
                guess.rows, guess.cols, target.rows, target.cols
            )));
        }
        let grid4 = build_grid(&guess, target, four_node)?;
        let grid2 = build_grid(&guess, target, trace_product_node)?;
        let tb = contract_grid(&grid4, bcfg)?.re;
        let lr = contract_grid(&grid4.transposed(), bcfg)?.re;
        let scale = tb.abs().max(lr.abs());
        if scale > 0.0 && (tb - lr).abs() > 0.01 * scale {
            return Err(Error::InvalidConfig(format!(
                "boundary contraction inconsistent at chi = {}: top-to-bottom gives \
                 {tb:.6e}, left-to-right {lr:.6e}; raise chi",
                bcfg.chi
            )));
        }
        let mut ws = Self {
            target: target.clone(),
            guess,
            bcfg: *bcfg,
            grid4,
            grid2,
            last_error: f64::NAN,
            sweeps_done: 0,
        };
        ws.last_error = ws.error_at(0, 0)?;
        Ok(ws)
    }

    pub fn target(&self) -> &Pepo {
        &self.target
    }

    pub fn guess(&self) -> &Pepo {
        &self.guess
    }

    /// Normalized error `‖U′U − 1‖²_F / 4ⁿ` of the current guess, as
    /// estimated through the (approximate) environments of the most
    /// recently updated site.
    pub fn last_error(&self) -> f64 {
        self.last_error
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    fn norm(&self) -> f64 {
        4f64.powi(self.guess.n_sites() as i32)
    }

    /// Fresh single-site environments (no caching): the quartic and linear
    /// hole environments of site (r, c) in their respective networks.
    fn fresh_envs(&self, r: usize, c: usize) -> Result<(ArrayD<C64>, ArrayD<C64>)> {
        let tcfg = self.bcfg.truncation();
        let mut pieces = Vec::with_capacity(2);
        for grid in [&self.grid4, &self.grid2] {
            let mut top = ones_mps(grid.cols);
            for rr in 0..r {
                top = evolve_boundary(&top, grid, rr, true, &tcfg)?;
            }
            let mut bot = ones_mps(grid.cols);
            for rr in (r + 1..grid.rows).rev() {
                bot = evolve_boundary(&bot, grid, rr, false, &tcfg)?;
            }
            let row: Vec<ArrayD<C64>> = (0..grid.cols)
                .map(|cc| grid.node(r, cc).clone())
                .collect();
            let lenvs = sandwich_lenvs(&top, &row, &bot);
            let renvs = sandwich_renvs(&top, &row, &bot);
            pieces.push(hole_env(&lenvs[c], &renvs[c + 1], &top[c], &bot[c]));
        }
        let e2 = pieces.pop().expect("two environments");
        let e4 = pieces.pop().expect("two environments");
        Ok((e4, e2))
    }

    fn check_site(&self, r: usize, c: usize) -> Result<()> {
        if r >= self.guess.rows || c >= self.guess.cols {
            return Err(Error::DimensionMismatch(format!(
                "site ({r},{c}) outside the {}×{} grid",
                self.guess.rows, self.guess.cols
            )));
        }
        Ok(())
    }

    /// Full per-site system matrix `M = 1₄ ⊗ M_small` over the row-major
    /// vectorized site tensor (u, d, l, r, τ, σ), symmetrized. In 2D the
    /// matrix is only positive semidefinite up to the environment
    /// approximation.
    pub fn environment_m(&self, r: usize, c: usize) -> Result<Array2<C64>> {
        self.check_site(r, c)?;
        let (e4, _) = self.fresh_envs(r, c)?;
        let ms = self.m_small_from(&e4, r, c);
        let bonds: usize = self.guess.site(r, c).shape()[..4].iter().product();
        Ok(expand_output_blocks(&ms, bonds))
    }

    /// Right-hand side matching [`Self::environment_m`], vectorized over
    /// the row-major site layout.
    pub fn environment_n(&self, r: usize, c: usize) -> Result<Array1<C64>> {
        self.check_site(r, c)?;
        let (_, e2) = self.fresh_envs(r, c)?;
        let n = self.n_env_from(&e2, r, c).mapv(|z| z.conj());
        let len = n.len();
        Ok(n
            .into_shape_with_order(IxDyn(&[len]))
            .expect("contiguous rhs")
            .into_dimensionality()
            .expect("rank-1"))
    }

    /// Quartic-term block at (r, c) from the four-layer hole environment:
    /// rows and columns indexed by (bond legs, input leg), symmetrized.
    fn m_small_from(&self, e4: &ArrayD<C64>, r: usize, c: usize) -> Array2<C64> {
        let a = self.target.site(r, c).view().into_dyn();
        let ac = conj_view(a.view());
        let g = self.guess.site(r, c).shape();
        let t = self.target.site(r, c).shape();
        // unfuse each four-layer leg into (guess, target, conj target,
        // conj guess) components
        let mut shape = Vec::with_capacity(16);
        for ax in 0..4 {
            shape.extend([g[ax], t[ax], t[ax], g[ax]]);
        }
        let e16 = e4
            .clone()
            .into_shape_with_order(IxDyn(&shape))
            .expect("unfuse environment");
        // double layer of the target: (b-legs, y, c-legs, w)
        let mid = tensordot(a.view(), ac.view(), &[5], &[5]);
        let em = tensordot(
            e16.view(),
            mid.view(),
            &[1, 2, 5, 6, 9, 10, 13, 14],
            &[0, 5, 1, 6, 2, 7, 3, 8],
        );
        // (u_a, u_d, d_a, d_d, l_a, l_d, r_a, r_d, y, w) → rows are the
        // conjugate-side legs with the input leg, columns the guess side
        let m = into_matrix(permute_std(em, &[1, 3, 5, 7, 9, 0, 2, 4, 6, 8]), 5);
        let mh = m.t().mapv(|z| z.conj());
        (&m + &mh) * C64::new(0.5, 0.0)
    }

    /// Linear-term environment at (r, c) over (bond legs, out, in).
    fn n_env_from(&self, e2: &ArrayD<C64>, r: usize, c: usize) -> ArrayD<C64> {
        let a = self.target.site(r, c).view().into_dyn();
        let g = self.guess.site(r, c).shape();
        let t = self.target.site(r, c).shape();
        let mut shape = Vec::with_capacity(8);
        for ax in 0..4 {
            shape.extend([g[ax], t[ax]]);
        }
        let e8 = e2
            .clone()
            .into_shape_with_order(IxDyn(&shape))
            .expect("unfuse environment");
        let n = tensordot(e8.view(), a.view(), &[1, 3, 5, 7], &[0, 1, 2, 3]);
        // (u, d, l, r, y, x) → (u, d, l, r, out = x, in = y)
        permute_std(n, &[0, 1, 2, 3, 5, 4])
    }

    fn rhs_block(&self, e2: &ArrayD<C64>, r: usize, c: usize) -> Array2<C64> {
        let n = self.n_env_from(e2, r, c).mapv(|z| z.conj());
        // block layout: rows (bonds, in), one column per output leg
        into_matrix(permute_std(n, &[0, 1, 2, 3, 5, 4]), 5)
    }

    fn site_block(&self, r: usize, c: usize) -> Array2<C64> {
        let t = self.guess.site(r, c).view().into_dyn().to_owned();
        into_matrix(permute_std(t, &[0, 1, 2, 3, 5, 4]), 5)
    }

    /// Error estimate through the environments of one site.
    fn error_at(&self, r: usize, c: usize) -> Result<f64> {
        let (e4, e2) = self.fresh_envs(r, c)?;
        let ms = self.m_small_from(&e4, r, c);
        let rhs = self.rhs_block(&e2, r, c);
        Ok(quadratic_error(&ms, &rhs, &self.site_block(r, c), self.norm()))
    }

    /// Solves the site system from the given environments, installs the
    /// optimum (refreshing both network grids), and returns the error.
    fn solve_into_site(
        &mut self,
        e4: &ArrayD<C64>,
        e2: &ArrayD<C64>,
        r: usize,
        c: usize,
    ) -> Result<f64> {
        let ms = self.m_small_from(e4, r, c);
        let rhs = self.rhs_block(e2, r, c);
        let x = solve_spectral(&ms, &rhs)?;
        let err = quadratic_error(&ms, &rhs, &x, self.norm());
        let shape: Vec<usize> = self.guess.site(r, c).shape()[..4]
            .iter()
            .copied()
            .chain([4, 4])
            .collect();
        let xt = x
            .into_shape_with_order(IxDyn(&shape))
            .expect("block reshape");
        // block layout was (bonds, in) × out; restore (…, τ, σ)
        let site = permute_std(xt, &[0, 1, 2, 3, 5, 4])
            .into_dimensionality::<Ix6>()
            .expect("rank-6");
        self.grid4
            .set_node(r, c, four_node(&site, self.target.site(r, c)));
        self.grid2
            .set_node(r, c, trace_product_node(&site, self.target.site(r, c)));
        *self.guess.site_mut(r, c) = site;
        self.last_error = err;
        Ok(err)
    }

    /// One full sweep: every site left-to-right walking down the grid,
    /// then right-to-left walking back up. Returns the error estimate
    /// after each site update.
    pub fn sweep(&mut self) -> Result<Vec<f64>> {
        let tcfg = self.bcfg.truncation();
        let (rows, cols) = (self.guess.rows, self.guess.cols);
        let mut errs = Vec::with_capacity(2 * rows * cols);
        let trivial = ones_mps(cols);

        // downward: bottom caches fixed from the current guess, top grows
        // row by row with the updated sites
        let bots4 = bottoms(&self.grid4, &tcfg)?;
        let bots2 = bottoms(&self.grid2, &tcfg)?;
        let mut top4 = trivial.clone();
        let mut top2 = trivial.clone();
        for r in 0..rows {
            let bot4 = if r + 1 < rows { &bots4[r + 1] } else { &trivial };
            let bot2 = if r + 1 < rows { &bots2[r + 1] } else { &trivial };
            let row4: Vec<ArrayD<C64>> =
                (0..cols).map(|c| self.grid4.node(r, c).clone()).collect();
            let row2: Vec<ArrayD<C64>> =
                (0..cols).map(|c| self.grid2.node(r, c).clone()).collect();
            let renvs4 = sandwich_renvs(&top4, &row4, bot4);
            let renvs2 = sandwich_renvs(&top2, &row2, bot2);
            let mut lenv4 = ArrayD::<C64>::ones(IxDyn(&[1, 1, 1]));
            let mut lenv2 = ArrayD::<C64>::ones(IxDyn(&[1, 1, 1]));
            for c in 0..cols {
                let e4 = hole_env(&lenv4, &renvs4[c + 1], &top4[c], &bot4[c]);
                let e2 = hole_env(&lenv2, &renvs2[c + 1], &top2[c], &bot2[c]);
                errs.push(self.solve_into_site(&e4, &e2, r, c)?);
                lenv4 = sandwich_step_right(&lenv4, &top4[c], self.grid4.node(r, c), &bot4[c]);
                lenv2 = sandwich_step_right(&lenv2, &top2[c], self.grid2.node(r, c), &bot2[c]);
            }
            top4 = evolve_boundary(&top4, &self.grid4, r, true, &tcfg)?;
            top2 = evolve_boundary(&top2, &self.grid2, r, true, &tcfg)?;
        }

        // upward: top caches fixed from the post-descent guess, bottom
        // grows with the updated rows
        let tops4 = tops(&self.grid4, &tcfg)?;
        let tops2 = tops(&self.grid2, &tcfg)?;
        let mut bot4 = trivial.clone();
        let mut bot2 = trivial.clone();
        for r in (0..rows).rev() {
            let top4 = if r > 0 { &tops4[r - 1] } else { &trivial };
            let top2 = if r > 0 { &tops2[r - 1] } else { &trivial };
            let row4: Vec<ArrayD<C64>> =
                (0..cols).map(|c| self.grid4.node(r, c).clone()).collect();
            let row2: Vec<ArrayD<C64>> =
                (0..cols).map(|c| self.grid2.node(r, c).clone()).collect();
            let lenvs4 = sandwich_lenvs(top4, &row4, &bot4);
            let lenvs2 = sandwich_lenvs(top2, &row2, &bot2);
            let mut renv4 = ArrayD::<C64>::ones(IxDyn(&[1, 1, 1]));
            let mut renv2 = ArrayD::<C64>::ones(IxDyn(&[1, 1, 1]));
            for c in (0..cols).rev() {
                let e4 = hole_env(&lenvs4[c], &renv4, &top4[c], &bot4[c]);
                let e2 = hole_env(&lenvs2[c], &renv2, &top2[c], &bot2[c]);
                errs.push(self.solve_into_site(&e4, &e2, r, c)?);
                renv4 = sandwich_step_left(&renv4, &top4[c], self.grid4.node(r, c), &bot4[c]);
                renv2 = sandwich_step_left(&renv2, &top2[c], self.grid2.node(r, c), &bot2[c]);
            }
            bot4 = evolve_boundary(&bot4, &self.grid4, r, false, &tcfg)?;
            bot2 = evolve_boundary(&bot2, &self.grid2, r, false, &tcfg)?;
        }
        self.sweeps_done += 1;
        Ok(errs)
    }
}

fn build_grid(
    guess: &Pepo,
    target: &Pepo,
    node: fn(&Array6<C64>, &Array6<C64>) -> ArrayD<C64>,
) -> Result<NodeGrid> {
    if guess.rows != target.rows || guess.cols != target.cols {
        return Err(Error::DimensionMismatch(format!(
            "guess grid {}×{} does not match target {}×{}",
            guess.rows, guess.cols, target.rows, target.cols
        )));
    }
    let nodes = guess
        .sites
        .iter()
        .zip(&target.sites)
        .map(|(g, a)| node(g, a))
        .collect();
    Ok(NodeGrid {
        rows: guess.rows,
        cols: guess.cols,
        nodes,
    })
}

/// Expands `M_small` (rows and columns over (bonds, input leg)) into the
/// full `1₄ ⊗ M_small` system over the row-major site vectorization
/// (bonds, output leg, input leg).
fn expand_output_blocks(ms: &Array2<C64>, bonds: usize) -> Array2<C64> {
    let k = bonds * 16;
    let mut m = Array2::<C64>::zeros((k, k));
    for b in 0..bonds {
        for w in 0..4 {
            for bp in 0..bonds {
                for y in 0..4 {
                    let v = ms[[b * 4 + w, bp * 4 + y]];
                    if v != C64::new(0.0, 0.0) {
                        for x in 0..4 {
                            m[[(b * 4 + x) * 4 + w, (bp * 4 + x) * 4 + y]] = v;
                        }
                    }
                }
            }
        }
    }
    m
}

/// Fits a PEPO approximation of `u⁻¹` with the given bond dimension,
/// sweeping until the normalized error `‖U′U − 1‖²_F / 4ⁿ` stalls (change
/// below `tol` between sweeps) or the sweep budget runs out. The starting
/// guess is the truncated adjoint of the target.
pub fn pepo_inverse(
    u: &Pepo,
    bond: usize,
    cfg: &BoundaryContractionConfig,
    max_sweeps: usize,
    tol: f64,
) -> Result<(Pepo, InverseReport)> {
    let mut ws = PepoInverseWorkspace::new(u, bond, cfg)?;
    let mut error_history = vec![ws.last_error()];
    let mut trace_infidelity_history = vec![trace_infidelity_pepo(ws.guess(), cfg)?];
    let mut converged = false;
    let mut prev = ws.last_error();
    while ws.sweeps_done() < max_sweeps {
        error_history.extend(ws.sweep()?);
        trace_infidelity_history.push(trace_infidelity_pepo(ws.guess(), cfg)?);
        let now = ws.last_error();
        if (prev - now).abs() < tol {
            converged = true;
            break;
        }
        prev = now;
    }
    let report = InverseReport {
        converged,
        final_error: ws.last_error(),
        sweeps_used: ws.sweeps_done(),
        error_history,
        trace_infidelity_history,
    };
    Ok((ws.guess.clone(), report))
}
