//! Dense superoperator and vectorized-state reference implementation.
//!
//! Channels act on density matrices through their matrix representation in
//! the vectorized (operator) basis: a state ρ becomes a column vector |ρ⟩⟩ and
//! a channel becomes the matrix that multiplies it. The basis convention is
//! fixed crate-wide:
//!
//! * per qubit, |i⟩⟨j| maps to component 2i + j, so the four components are
//!   ordered |0⟩⟨0|, |0⟩⟨1|, |1⟩⟨0|, |1⟩⟨1| (row-major in the matrix entries);
//! * components of different qubits are grouped per site, with qubit 0 in the
//!   most-significant position — the global index is a base-4 string whose
//!   s-th digit is the site-s component.
//!
//! Grouping per site (rather than flattening the full 2ⁿ×2ⁿ matrix row-major)
//! is what lets the tensor-network side treat each site as one physical leg of
//! dimension 4; this module is the slow, exact mirror of those operations and
//! is deliberately capped at small qubit counts.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Inverse, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest qubit count for which dense superoperators may be built.
pub const DENSE_SUPEROP_QUBIT_CAP: usize = 6;
/// Largest qubit count for which dense vectorized states may be built.
pub const DENSE_STATE_QUBIT_CAP: usize = 10;

/// Dense matrix representation of an n-qubit superoperator (4ⁿ × 4ⁿ).
#[derive(Debug, Clone)]
pub struct DenseSuperOp {
    n_qubits: usize,
    mat: Array2<C64>,
}

/// Dense vectorized n-qubit operator/state (length 4ⁿ).
#[derive(Debug, Clone)]
pub struct DenseState {
    n_qubits: usize,
    vec: Array1<C64>,
}

fn check_superop_cap(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > DENSE_SUPEROP_QUBIT_CAP {
        return Err(Error::DenseCapExceeded {
            limit: DENSE_SUPEROP_QUBIT_CAP,
            requested: n_qubits,
        });
    }
    Ok(())
}

fn check_state_cap(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > DENSE_STATE_QUBIT_CAP {
        return Err(Error::DenseCapExceeded {
            limit: DENSE_STATE_QUBIT_CAP,
            requested: n_qubits,
        });
    }
    Ok(())
}

/// Permutation taking a grouped index (per-qubit digits 2i+j) to the
/// corresponding "matrix" index i·2ᵏ + j of a flattened 2ᵏ×2ᵏ operator.
fn grouped_to_matrix_index(k: usize) -> Vec<usize> {
    let dim = 1usize << k; // 2^k
    let mut map = vec![0usize; dim * dim];
    for g in 0..dim * dim {
        let mut i = 0usize;
        let mut j = 0usize;
        let mut rem = g;
        // digits come out least-significant (site k-1) first
        let mut digits = vec![0usize; k];
        for s in (0..k).rev() {
            digits[s] = rem % 4;
            rem /= 4;
        }
        for d in digits {
            i = 2 * i + d / 2;
            j = 2 * j + d % 2;
        }
        map[g] = i * dim + j;
    }
    map
}

/// Builds the superoperator of the operator-sum map ρ ↦ Σ_k E_k ρ E_k† from
/// its Kraus operators (each 2ᵏ × 2ᵏ), in the grouped vectorized basis.
pub fn superop_from_kraus(kraus: &[Array2<C64>]) -> Result<DenseSuperOp> {
    if kraus.is_empty() {
        return Err(Error::DimensionMismatch("empty Kraus list".into()));
    }
    let dim = kraus[0].nrows();
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::DimensionMismatch(format!(
            "Kraus operators must be 2^k square, got {dim}"
        )));
    }
    let k = dim.trailing_zeros() as usize;
    check_superop_cap(k)?;
    for e in kraus {
        if e.nrows() != dim || e.ncols() != dim {
            return Err(Error::DimensionMismatch(
                "Kraus operators must share one square shape".into(),
            ));
        }
    }
    // In the flattened (i·2^k + j) basis the map is Σ E ⊗ E*; build that and
    // permute both indices into the grouped basis.
    let d2 = dim * dim;
    let mut flat = Array2::<C64>::zeros((d2, d2));
    for e in kraus {
        let ec = e.mapv(|z| z.conj());
        for r0 in 0..dim {
            for r1 in 0..dim {
                for c0 in 0..dim {
                    for c1 in 0..dim {
                        flat[[r0 * dim + r1, c0 * dim + c1]] += e[[r0, c0]] * ec[[r1, c1]];
                    }
                }
            }
        }
    }
    let map = grouped_to_matrix_index(k);
    let mut grouped = Array2::<C64>::zeros((d2, d2));
    for g in 0..d2 {
        for h in 0..d2 {
            grouped[[g, h]] = flat[[map[g], map[h]]];
        }
    }
    Ok(DenseSuperOp {
        n_qubits: k,
        mat: grouped,
    })
}

impl DenseSuperOp {
    /// Identity map on n qubits.
    pub fn identity(n_qubits: usize) -> Result<Self> {
        check_superop_cap(n_qubits)?;
        Ok(Self {
            n_qubits,
            mat: Array2::eye(1 << (2 * n_qubits)),
        })
    }

    /// Wraps an explicit matrix (grouped basis).
    pub fn from_matrix(n_qubits: usize, mat: Array2<C64>) -> Result<Self> {
        check_superop_cap(n_qubits)?;
        let dim = 1usize << (2 * n_qubits);
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim}×{dim} matrix for {n_qubits} qubits, got {}×{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { n_qubits, mat })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    /// Applies the map to a vectorized state.
    pub fn apply(&self, state: &DenseState) -> Result<DenseState> {
        if state.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "operator on {} qubits applied to state on {}",
                self.n_qubits, state.n_qubits
            )));
        }
        Ok(DenseState {
            n_qubits: state.n_qubits,
            vec: self.mat.dot(&state.vec),
        })
    }

    /// Composition self ∘ other: `other` acts first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "composing maps on {} and {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(Self {
            n_qubits: self.n_qubits,
            mat: self.mat.dot(&other.mat),
        })
    }

    /// Left-multiplies by a k-local map placed on contiguous sites
    /// [site, site + k): self ← (1 ⊗ op ⊗ 1) · self. The local matrix is in
    /// the grouped basis (4ᵏ × 4ᵏ). Much cheaper than building the embedded
    /// matrix and composing.
    pub fn apply_local(&mut self, op: &Array2<C64>, site: usize) -> Result<()> {
        let ldim = op.nrows();
        if op.ncols() != ldim || !ldim.is_power_of_two() {
            return Err(Error::DimensionMismatch("local map must be square 4^k".into()));
        }
        let k = (ldim.trailing_zeros() / 2) as usize;
        if ldim != 1 << (2 * k) {
            return Err(Error::DimensionMismatch("local map dim must be a power of 4".into()));
        }
        if site + k > self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "local map on sites {site}..{} exceeds {} qubits",
                site + k,
                self.n_qubits
            )));
        }
        let whole = self.dim();
        let before = 1usize << (2 * site); // 4^site
        let after = whole / before / ldim;
        // Rows split as (before, local, after); columns ride along.
        let cols = whole;
        let a = std::mem::take(&mut self.mat);
        let t = a
            .into_shape_with_order((before, ldim, after * cols))
            .expect("row split");
        let t = crate::contract::standardize_own(t.permuted_axes((1, 0, 2)).into_dyn())
            .into_shape_with_order((ldim, before * after * cols))
            .expect("contiguous");
        let prod = op.dot(&t);
        let prod = prod
            .into_shape_with_order((ldim, before, after * cols))
            .expect("unsplit");
        let back = crate::contract::standardize_own(prod.permuted_axes((1, 0, 2)).into_dyn())
            .into_shape_with_order((whole, cols))
            .expect("final shape");
        self.mat = back;
        Ok(())
    }

    /// Left-composes correlated depolarizing noise across all qubits in
    /// place, using its rank-one structure:
    /// G·A = (1−γ)A + (γ/2ⁿ)|1⟩⟩(⟨⟨1|A) with γ = 4ⁿε/(4ⁿ−1).
    /// O(dim²) instead of the O(dim³) matrix product.
    pub fn apply_global_depolarizing(&mut self, rate: f64) -> Result<()> {
        let d4 = 4f64.powi(self.n_qubits as i32);
        let max = (d4 - 1.0) / d4;
        if !(0.0..1.0).contains(&rate) || rate > max {
            return Err(Error::RateOutOfRange {
                kind: "correlated depolarizing",
                rate,
                max,
            });
        }
        let gamma = d4 * rate / (d4 - 1.0);
        let v = Self::vec_identity(self.n_qubits)?;
        let diag_rows: Vec<usize> = v
            .iter()
            .enumerate()
            .filter(|(_, z)| z.re != 0.0)
            .map(|(i, _)| i)
            .collect();
        let mut bra = Array1::<C64>::zeros(self.dim());
        for &r in &diag_rows {
            bra += &self.mat.row(r);
        }
        self.mat.mapv_inplace(|z| z * (1.0 - gamma));
        let w = gamma / (1 << self.n_qubits) as f64;
        for &r in &diag_rows {
            let mut row = self.mat.row_mut(r);
            row += &(&bra * C64::new(w, 0.0));
        }
        Ok(())
    }

    /// Hermitian adjoint of the superoperator matrix.
    pub fn dagger(&self) -> Self {
        Self {
            n_qubits: self.n_qubits,
            mat: self.mat.t().mapv(|z| z.conj()),
        }
    }

    /// Squared Frobenius norm.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Matrix inverse via LU, with a residual safety check: the inverse is
    /// rejected if ‖A·A⁻¹ − 1‖_F exceeds `1e-8 · dim`.
    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .mat
            .inv()
            .map_err(|e| Error::SingularOperator(e.to_string()))?;
        let mut resid = self.mat.dot(&inv);
        for i in 0..resid.nrows() {
            resid[[i, i]] -= C64::new(1.0, 0.0);
        }
        let r: f64 = resid.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let budget = 1e-8 * self.dim() as f64;
        if r > budget {
            return Err(Error::SingularOperator(format!(
                "inverse residual {r:.3e} exceeds {budget:.3e}; operator is numerically singular"
            )));
        }
        Ok(Self {
            n_qubits: self.n_qubits,
            mat: inv,
        })
    }

    /// Row vector ⟨⟨1| of this operator's qubit count: the vectorized identity.
    pub fn vec_identity(n_qubits: usize) -> Result<Array1<C64>> {
        check_state_cap(n_qubits)?;
        let dim = 1usize << (2 * n_qubits);
        let mut v = Array1::<C64>::zeros(dim);
        for g in 0..dim {
            let mut rem = g;
            let mut diag = true;
            for _ in 0..n_qubits {
                let d = rem % 4;
                rem /= 4;
                if d == 1 || d == 2 {
                    diag = false;
                    break;
                }
            }
            if diag {
                v[g] = C64::new(1.0, 0.0);
            }
        }
        Ok(v)
    }

    /// Average deviation from trace preservation: the squared 2-norm of
    /// ⟨⟨1| − ⟨⟨1|U. Zero exactly when the map is trace-preserving.
    pub fn trace_infidelity(&self) -> f64 {
        let v = Self::vec_identity(self.n_qubits).expect("cap already checked");
        // (⟨⟨1|U)[c] = Σ_r v[r]·U[r,c]
        let w = self.mat.t().dot(&v);
        v.iter()
            .zip(w.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    }

    /// Whether ⟨⟨1|U = ⟨⟨1| holds entrywise within `tol`.
    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let v = Self::vec_identity(self.n_qubits).expect("cap already checked");
        let w = self.mat.t().dot(&v);
        v.iter().zip(w.iter()).all(|(a, b)| (a - b).norm() <= tol)
    }

    /// Choi matrix of the map (unnormalized; trace = 2ⁿ for TP maps).
    pub fn choi(&self) -> Array2<C64> {
        let n = self.n_qubits;
        let dim = 1usize << n;
        let map = grouped_to_matrix_index(n);
        // inverse permutation: matrix index (i·2ⁿ+j) → grouped index
        let mut inv = vec![0usize; map.len()];
        for (g, &m) in map.iter().enumerate() {
            inv[m] = g;
        }
        let mut choi = Array2::<C64>::zeros((dim * dim, dim * dim));
        // Choi[(k,i),(l,j)] = U[grouped(i,j), grouped(k,l)]
        for k in 0..dim {
            for i in 0..dim {
                for l in 0..dim {
                    for j in 0..dim {
                        choi[[k * dim + i, l * dim + j]] =
                            self.mat[[inv[i * dim + j], inv[k * dim + l]]];
                    }
                }
            }
        }
        choi
    }

    /// Whether the map is completely positive within `tol`: all Choi
    /// eigenvalues ≥ −tol.
    pub fn is_completely_positive(&self, tol: f64) -> Result<bool> {
        let choi = self.choi();
        // symmetrize against rounding before the Hermitian eigensolve
        let herm = (&choi + &choi.t().mapv(|z| z.conj())) / C64::new(2.0, 0.0);
        let (eigs, _) = herm.eigh(UPLO::Lower)?;
        Ok(eigs.iter().all(|&e| e >= -tol))
    }
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| {
        a[[i / br, j / bc]] * b[[i % br, j % bc]]
    })
}

/// Relative Frobenius distance ‖a − b‖²_F / √(‖a‖²_F · ‖b‖²_F).
pub fn relative_distance(a: &DenseSuperOp, b: &DenseSuperOp) -> Result<f64> {
    if a.n_qubits != b.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "distance between maps on {} and {} qubits",
            a.n_qubits, b.n_qubits
        )));
    }
    let na = a.frobenius_norm_sq();
    let nb = b.frobenius_norm_sq();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DimensionMismatch(
            "relative distance undefined for zero-norm operators".into(),
        ));
    }
    let diff: f64 = a
        .mat
        .iter()
        .zip(b.mat.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    Ok(diff / (na * nb).sqrt())
}

impl DenseState {
    /// The all-zeros product state |0…0⟩⟨0…0| in vectorized form.
    pub fn product_zero(n_qubits: usize) -> Result<Self> {
        check_state_cap(n_qubits)?;
        let dim = 1usize << (2 * n_qubits);
        let mut vec = Array1::<C64>::zeros(dim);
        vec[0] = C64::new(1.0, 0.0);
        Ok(Self { n_qubits, vec })
    }

    /// Wraps an explicit vector (grouped basis).
    pub fn from_vec(n_qubits: usize, vec: Array1<C64>) -> Result<Self> {
        check_state_cap(n_qubits)?;
        let dim = 1usize << (2 * n_qubits);
        if vec.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "expected length {dim} for {n_qubits} qubits, got {}",
                vec.len()
            )));
        }
        Ok(Self { n_qubits, vec })
    }

    /// Vectorizes a 2ⁿ×2ⁿ density matrix.
    pub fn from_density_matrix(rho: &Array2<C64>) -> Result<Self> {
        let dim = rho.nrows();
        if rho.ncols() != dim || !dim.is_power_of_two() || dim < 2 {
            return Err(Error::DimensionMismatch(
                "density matrix must be 2^n square".into(),
            ));
        }
        let n = dim.trailing_zeros() as usize;
        check_state_cap(n)?;
        let map = grouped_to_matrix_index(n);
        let mut vec = Array1::<C64>::zeros(dim * dim);
        for g in 0..dim * dim {
            let m = map[g];
            vec[g] = rho[[m / dim, m % dim]];
        }
        Ok(Self { n_qubits: n, vec })
    }

    /// Reassembles the 2ⁿ×2ⁿ matrix this vector represents.
    pub fn to_density_matrix(&self) -> Array2<C64> {
        let dim = 1usize << self.n_qubits;
        let map = grouped_to_matrix_index(self.n_qubits);
        let mut rho = Array2::<C64>::zeros((dim, dim));
        for g in 0..dim * dim {
            let m = map[g];
            rho[[m / dim, m % dim]] = self.vec[g];
        }
        rho
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn vector(&self) -> &Array1<C64> {
        &self.vec
    }

    /// Trace of the represented operator, ⟨⟨1|ρ⟩⟩.
    pub fn trace(&self) -> C64 {
        let v = DenseSuperOp::vec_identity(self.n_qubits).expect("cap already checked");
        v.iter().zip(self.vec.iter()).map(|(a, b)| a * b).sum()
    }

    /// Hilbert–Schmidt inner product ⟨⟨self|other⟩⟩ = Tr[self† · other].
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "overlap between states on {} and {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self
            .vec
            .iter()
            .zip(other.vec.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.vec.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Applies a k-local map (grouped 4ᵏ×4ᵏ) on contiguous sites starting at
    /// `site`.
    pub fn apply_local(&mut self, op: &Array2<C64>, site: usize) -> Result<()> {
        let ldim = op.nrows();
        if op.ncols() != ldim {
            return Err(Error::DimensionMismatch("local map must be square".into()));
        }
        let k = (ldim.trailing_zeros() / 2) as usize;
        if ldim != 1 << (2 * k) || site + k > self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "local map dim {ldim} at site {site} does not fit {} qubits",
                self.n_qubits
            )));
        }
        let whole = self.vec.len();
        let before = 1usize << (2 * site);
        let after = whole / before / ldim;
        let v = std::mem::take(&mut self.vec);
        let t = v.into_shape_with_order((before, ldim, after)).expect("split");
        let t = crate::contract::standardize_own(t.permuted_axes((1, 0, 2)).into_dyn())
            .into_shape_with_order((ldim, before * after))
            .expect("contiguous");
        let prod = op.dot(&t);
        let prod = prod
            .into_shape_with_order((ldim, before, after))
            .expect("unsplit");
        let back = crate::contract::standardize_own(prod.permuted_axes((1, 0, 2)).into_dyn())
            .into_shape_with_order(whole)
            .expect("final shape");
        self.vec = back;
        Ok(())
    }

    /// Applies correlated depolarizing noise across all qubits in place:
    /// ρ ← (1−γ)ρ + (γ/2ⁿ)Tr[ρ]·1 with γ = 4ⁿε/(4ⁿ−1).
    pub fn apply_global_depolarizing(&mut self, rate: f64) -> Result<()> {
        let d4 = 4f64.powi(self.n_qubits as i32);
        let max = (d4 - 1.0) / d4;
        if !(0.0..1.0).contains(&rate) || rate > max {
            return Err(Error::RateOutOfRange {
                kind: "correlated depolarizing",
                rate,
                max,
            });
        }
        let gamma = d4 * rate / (d4 - 1.0);
        let tr = self.trace();
        let v = DenseSuperOp::vec_identity(self.n_qubits)?;
        let w = C64::new(gamma / (1 << self.n_qubits) as f64, 0.0) * tr;
        self.vec.mapv_inplace(|z| z * (1.0 - gamma));
        self.vec += &(&v * w);
        Ok(())
    }
}

/// Relative Frobenius distance between two vectorized states.
pub fn relative_distance_state(a: &DenseState, b: &DenseState) -> Result<f64> {
    let na = a.norm_sq();
    let nb = b.norm_sq();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DimensionMismatch(
            "relative distance undefined for zero-norm states".into(),
        ));
    }
    let diff: f64 = a
        .vec
        .iter()
        .zip(b.vec.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    Ok(diff / (na * nb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(dim: usize, seed: u64) -> Array2<C64> {
        let mut rng = crate::rng::rng_for(seed, 7);
        Array2::from_shape_fn((dim, dim), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_density_matrix(n: usize, seed: u64) -> Array2<C64> {
        // A A† / Tr, always a valid state
        let a = random_matrix(1 << n, seed);
        let aa = a.dot(&a.t().mapv(|z| z.conj()));
        let tr: C64 = (0..aa.nrows()).map(|i| aa[[i, i]]).sum();
        aa / tr
    }

    const Z: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, -1.0]];

    fn zmat() -> Array2<C64> {
        Array2::from_shape_fn((2, 2), |(i, j)| c(Z[i][j], 0.0))
    }

    #[test]
    fn pauli_z_superop_is_the_expected_diagonal() {
        let s = superop_from_kraus(&[zmat()]).unwrap();
        let expect = Array2::from_diag(&array![c(1., 0.), c(-1., 0.), c(-1., 0.), c(1., 0.)]);
        let err: f64 = (s.matrix() - &expect).iter().map(|z| z.norm()).sum();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn superop_action_matches_operator_sum_on_matrices() {
        // single qubit, random E: compare E ρ E† computed directly
        let e = random_matrix(2, 1);
        let rho = random_density_matrix(1, 2);
        let s = superop_from_kraus(&[e.clone()]).unwrap();
        let vec_in = DenseState::from_density_matrix(&rho).unwrap();
        let vec_out = s.apply(&vec_in).unwrap();
        let direct = e.dot(&rho).dot(&e.t().mapv(|z| z.conj()));
        let err: f64 = (&vec_out.to_density_matrix() - &direct)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn two_qubit_superop_action_matches_operator_sum() {
        let e = random_matrix(4, 3);
        let f = random_matrix(4, 4);
        let rho = random_density_matrix(2, 5);
        let s = superop_from_kraus(&[e.clone(), f.clone()]).unwrap();
        let vec_out = s.apply(&DenseState::from_density_matrix(&rho).unwrap()).unwrap();
        let direct = e.dot(&rho).dot(&e.t().mapv(|z| z.conj()))
            + f.dot(&rho).dot(&f.t().mapv(|z| z.conj()));
        let err: f64 = (&vec_out.to_density_matrix() - &direct)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn grouped_basis_factorizes_product_operators() {
        // superop of E ⊗ F must be kron(superop E, superop F) in the grouped basis
        let e = random_matrix(2, 10);
        let f = random_matrix(2, 11);
        let mut ef = Array2::<C64>::zeros((4, 4));
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        ef[[2 * i + k, 2 * j + l]] = e[[i, j]] * f[[k, l]];
                    }
                }
            }
        }
        let s_ef = superop_from_kraus(&[ef]).unwrap();
        let s_e = superop_from_kraus(&[e]).unwrap();
        let s_f = superop_from_kraus(&[f]).unwrap();
        let kron = kron(s_e.matrix(), s_f.matrix());
        let err: f64 = (s_ef.matrix() - &kron).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let a = superop_from_kraus(&[random_matrix(2, 20)]).unwrap();
        let b = superop_from_kraus(&[random_matrix(2, 21)]).unwrap();
        let rho = DenseState::from_density_matrix(&random_density_matrix(1, 22)).unwrap();
        let via_compose = a.compose(&b).unwrap().apply(&rho).unwrap();
        let stepwise = a.apply(&b.apply(&rho).unwrap()).unwrap();
        let err: f64 = (&via_compose.vec - &stepwise.vec)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn apply_local_matches_explicit_embedding() {
        // three qubits, 2-local op on sites (1,2)
        let local = random_matrix(16, 30);
        let mut advanced = DenseSuperOp::identity(3).unwrap();
        // randomize the target so the test is not about identities
        let seedm = random_matrix(64, 31);
        advanced = DenseSuperOp::from_matrix(3, seedm.clone()).unwrap();
        advanced.apply_local(&local, 1).unwrap();
        let eye4 = Array2::<C64>::eye(4);
        let embedded = kron(&eye4, &local);
        let expect = embedded.dot(&seedm);
        let err: f64 = (advanced.matrix() - &expect).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);

        // 1-local at site 0
        let local1 = random_matrix(4, 32);
        let mut m = DenseSuperOp::from_matrix(3, seedm.clone()).unwrap();
        m.apply_local(&local1, 0).unwrap();
        let eye16 = Array2::<C64>::eye(16);
        let expect = kron(&local1, &eye16).dot(&seedm);
        let err: f64 = (m.matrix() - &expect).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn state_apply_local_matches_superop_apply() {
        let local = random_matrix(16, 40);
        let rho = random_density_matrix(3, 41);
        let mut s = DenseState::from_density_matrix(&rho).unwrap();
        let mut full = DenseSuperOp::identity(3).unwrap();
        full.apply_local(&local, 0).unwrap();
        let expect = full.apply(&DenseState::from_density_matrix(&rho).unwrap()).unwrap();
        s.apply_local(&local, 0).unwrap();
        let err: f64 = (&s.vec - &expect.vec).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn inverse_round_trips_and_rejects_singular() {
        let h = Array2::from_shape_fn((2, 2), |(i, j)| {
            c([[1., 1.], [1., -1.]][i][j] / 2f64.sqrt(), 0.0)
        });
        let s = superop_from_kraus(&[h]).unwrap();
        let inv = s.inverse().unwrap();
        let prod = s.compose(&inv).unwrap();
        let eye = DenseSuperOp::identity(1).unwrap();
        assert!(relative_distance(&prod, &eye).unwrap() < 1e-12);

        // completely dephasing + amplitude damping at ε = 1 maps everything
        // into a 1-dim image: singular
        let e0 = array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c(0., 0.)]];
        let e1 = array![[c(0., 0.), c(1., 0.)], [c(0., 0.), c(0., 0.)]];
        let s = superop_from_kraus(&[e0, e1]).unwrap();
        assert!(s.inverse().is_err());
    }

    #[test]
    fn relative_distance_of_identity_and_z_superop_is_two() {
        let eye = DenseSuperOp::identity(1).unwrap();
        let z = superop_from_kraus(&[zmat()]).unwrap();
        let d = relative_distance(&eye, &z).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
        assert_eq!(relative_distance(&eye, &eye).unwrap(), 0.0);
    }

    #[test]
    fn trace_infidelity_zero_for_tp_and_quadratic_in_scaling() {
        let h = Array2::from_shape_fn((2, 2), |(i, j)| {
            c([[1., 1.], [1., -1.]][i][j] / 2f64.sqrt(), 0.0)
        });
        let s = superop_from_kraus(&[h]).unwrap();
        assert!(s.trace_infidelity() < 1e-28);
        assert!(s.is_trace_preserving(1e-14));

        // (1+δ)·identity on one qubit: |⟨⟨1| − (1+δ)⟨⟨1||² = δ²·2
        let delta = 1e-3;
        let m = Array2::<C64>::eye(4) * c(1.0 + delta, 0.0);
        let s = DenseSuperOp::from_matrix(1, m).unwrap();
        assert!((s.trace_infidelity() - 2.0 * delta * delta).abs() < 1e-18);
    }

    #[test]
    fn choi_positivity_distinguishes_channels_from_inverses() {
        // single-qubit depolarizing mixture: CP
        let eps: f64 = 0.1;
        let x = array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]];
        let y = array![[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]];
        let kraus = vec![
            Array2::<C64>::eye(2) * c((1.0 - eps).sqrt(), 0.0),
            x * c((eps / 3.0).sqrt(), 0.0),
            y * c((eps / 3.0).sqrt(), 0.0),
            zmat() * c((eps / 3.0).sqrt(), 0.0),
        ];
        let s = superop_from_kraus(&kraus).unwrap();
        assert!(s.is_completely_positive(1e-10).unwrap());
        // its inverse is not CP
        let inv = s.inverse().unwrap();
        assert!(!inv.is_completely_positive(1e-10).unwrap());
    }

    #[test]
    fn density_matrix_round_trip_and_trace() {
        let rho = random_density_matrix(2, 50);
        let s = DenseState::from_density_matrix(&rho).unwrap();
        let back = s.to_density_matrix();
        let err: f64 = (&rho - &back).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert_eq!(err, 0.0);
        assert!((s.trace() - c(1.0, 0.0)).norm() < 1e-13);
        // overlap against itself equals Tr[ρ²] = Frobenius norm²
        let purity: C64 = s.overlap(&s).unwrap();
        let frob: f64 = rho.iter().map(|z| z.norm_sqr()).sum();
        assert!((purity.re - frob).abs() < 1e-13 && purity.im.abs() < 1e-14);
    }

    #[test]
    fn caps_are_enforced() {
        assert!(DenseSuperOp::identity(DENSE_SUPEROP_QUBIT_CAP + 1).is_err());
        assert!(DenseState::product_zero(DENSE_STATE_QUBIT_CAP + 1).is_err());
        assert!(DenseSuperOp::identity(0).is_err());
    }
}
