//! Variational MPO inversion by alternating least squares.
//!
//! Given a channel MPO `U`, this module fits an MPO `U′` of fixed bond
//! dimension to `U⁻¹` by minimizing the squared Frobenius error
//! `e = ‖U′U − 1‖²_F`. Expanding the square gives
//!
//! ```text
//! e = Tr[U′ U U† U′†] − 2 Re Tr[U′ U] + 4ⁿ
//! ```
//!
//! which is quadratic in each site tensor `B_j` of `U′` with every other
//! site held fixed: `e = B†M B − 2 Re(B†N) + 4ⁿ`. Each sweep solves the
//! normal equations `M_j B_j = N_j` site by site, left to right and back.
//! Both environments factor over the chain, so with cached partial
//! contractions every per-site system is assembled in amortized O(1).
//!
//! Because the output leg of `B_j` never contracts with anything else in
//! the quartic term, `M` is block diagonal: `M = 1₄ ⊗ M_small`. The solver
//! works with `M_small` (dimension `bond_l·bond_r·4`) and shares one
//! factorization across the four output-leg blocks.
//!
//! All reported errors are normalized by `‖1‖²_F = 4ⁿ`, i.e. this module
//! tracks `ē = ‖U′U − 1‖²_F / 4ⁿ`. The raw error grows with the identity's
//! norm, so a fixed sweep-to-sweep tolerance such as 1e-15 is only
//! meaningful on the normalized scale.

use crate::contract::{conj_view, into_matrix, permute_std, tensordot};
use crate::error::{Error, Result};
use crate::mpo::{trace_infidelity_mpo, Mpo};
use crate::rng::rng_for;
use ndarray::{Array1, Array2, ArrayD, Ix4, IxDyn};
use ndarray_linalg::{Eigh, FactorizeC, SolveC, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Random-number stream for random guess initialization.
const STREAM_INVERSE_INIT: u64 = 11;

/// Relative eigenvalue cutoff for the pseudo-inverse fallback in
/// [`solve_site`].
const SPECTRAL_CUTOFF: f64 = 1e-12;

/// Starting point for the variational guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseInit {
    /// Site-wise conjugate transpose of the target, compressed to the
    /// requested bond dimension. For near-unitary targets this starts
    /// inside the convergence basin.
    Dagger,
    /// Independent complex-uniform site entries drawn from the given seed.
    Random { seed: u64 },
}

/// Knobs for [`mpo_inverse`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    /// Bond dimension of the fitted inverse. The dagger start inherits the
    /// target's bond profile capped at this value; bonds are fixed from
    /// then on (single-site updates never grow them).
    #[serde(default = "default_bond_dim")]
    pub bond_dim: usize,
    /// Sweep budget; one sweep is a full left-to-right plus right-to-left
    /// pass.
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    /// Convergence threshold on the change of the normalized error between
    /// successive sweeps.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_init")]
    pub init: InverseInit,
}

fn default_bond_dim() -> usize {
    5
}
fn default_max_sweeps() -> usize {
    20
}
fn default_tol() -> f64 {
    1e-15
}
fn default_init() -> InverseInit {
    InverseInit::Dagger
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            bond_dim: default_bond_dim(),
            max_sweeps: default_max_sweeps(),
            tol: default_tol(),
            init: default_init(),
        }
    }
}

impl InverseConfig {
    pub fn with_bond_dim(bond_dim: usize) -> Self {
        Self {
            bond_dim,
            ..Self::default()
        }
    }
}

/// What a [`mpo_inverse`] run did.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InverseReport {
    /// Whether the sweep-to-sweep error change dropped below the tolerance
    /// within the sweep budget.
    pub converged: bool,
    /// Normalized error `‖U′U − 1‖²_F / 4ⁿ` of the returned operator.
    pub final_error: f64,
    pub sweeps_used: usize,
    /// Normalized error trajectory: the starting value followed by one
    /// entry per site update.
    pub error_history: Vec<f64>,
    /// Trace-preservation defect of the guess at the start and after each
    /// sweep. An accurate inverse of a trace-preserving channel becomes
    /// trace preserving itself, so this decaying is a physical
    /// plausibility check independent of the error metric.
    pub trace_infidelity_history: Vec<f64>,
}

/// Sweep state: the target, the current guess, and cached partial
/// contractions of the quartic (four-layer) and linear (two-layer)
/// networks.
///
/// `left4[j]` holds the contraction of sites `0..j` of the network
/// `Tr[U′ U U† U′†]`, indexed by the four layer bonds cut at position `j`;
/// `right4[j]` holds sites `j..n` contracted from the right. `left2`/`right2`
/// are the same for `Tr[U′ U]`. Watermarks track which entries are current,
/// so a site update invalidates one side and sweeps rebuild environments
/// one step at a time.
pub struct InverseWorkspace {
    target: Mpo,
    guess: Mpo,
    left4: Vec<ArrayD<C64>>,
    right4: Vec<ArrayD<C64>>,
    left2: Vec<ArrayD<C64>>,
    right2: Vec<ArrayD<C64>>,
    /// `left*[0..=left_valid]` are current.
    left_valid: usize,
    /// `right*[right_valid..=n]` are current.
    right_valid: usize,
    last_error: f64,
    sweeps_done: usize,
}

impl InverseWorkspace {
    /// Builds a workspace with the configured starting guess and records
    /// its error.
    pub fn new(target: &Mpo, cfg: &InverseConfig) -> Result<Self> {
        if cfg.bond_dim == 0 {
            return Err(Error::DimensionMismatch(
                "inverse bond dimension must be at least 1".into(),
            ));
        }
        let guess = match cfg.init {
            InverseInit::Dagger => {
                let mut g = target.dagger();
                if g.max_bond() > cfg.bond_dim {
                    g.truncate(&crate::decomp::TruncationConfig::with_max_bond(
                        cfg.bond_dim,
                    ))?;
                }
                g
            }
            InverseInit::Random { seed } => {
                let mut rng = rng_for(seed, STREAM_INVERSE_INIT);
                Mpo::random(target.n_sites(), cfg.bond_dim, &mut rng)?
            }
        };
        Self::with_guess(target, guess)
    }

    /// Builds a workspace around an explicit starting guess.
    pub fn with_guess(target: &Mpo, guess: Mpo) -> Result<Self> {
        let n = target.n_sites();
        if guess.n_sites() != n {
            return Err(Error::DimensionMismatch(format!(
                "guess has {} sites, target {n}",
                guess.n_sites()
            )));
        }
        let ones4 = ArrayD::ones(IxDyn(&[1, 1, 1, 1]));
        let ones2 = ArrayD::ones(IxDyn(&[1, 1]));
        let mut ws = Self {
            target: target.clone(),
            guess,
            left4: vec![ones4.clone(); n + 1],
            right4: vec![ones4; n + 1],
            left2: vec![ones2.clone(); n + 1],
            right2: vec![ones2; n + 1],
            left_valid: 0,
            right_valid: n,
            last_error: f64::NAN,
            sweeps_done: 0,
        };
        ws.last_error = ws.error_at(0)?;
        Ok(ws)
    }

    pub fn target(&self) -> &Mpo {
        &self.target
    }

    pub fn guess(&self) -> &Mpo {
        &self.guess
    }

    /// Normalized error of the current guess.
    pub fn last_error(&self) -> f64 {
        self.last_error
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    fn dims(&self, site: usize) -> (usize, usize) {
        let s = self.guess.site(site).shape();
        (s[0], s[1])
    }

    fn norm(&self) -> f64 {
        4f64.powi(self.target.n_sites() as i32)
    }

    /// Extends the left caches so `left*[j]` are current.
    fn ensure_left(&mut self, j: usize) {
        for k in (self.left_valid + 1)..=j {
            let g = self.guess.site(k - 1).view().into_dyn();
            let a = self.target.site(k - 1).view().into_dyn();
            let gc = conj_view(g.view());
            let ac = conj_view(a.view());
            // four-layer step: bonds (a,b,c,d) carry guess, target,
            // conj target, conj guess
            let t1 = tensordot(self.left4[k - 1].view(), g.view(), &[0], &[0]);
            let t2 = tensordot(t1.view(), a.view(), &[0, 5], &[0, 2]);
            let t3 = tensordot(t2.view(), ac.view(), &[0, 5], &[0, 3]);
            self.left4[k] = tensordot(t3.view(), gc.view(), &[0, 2, 5], &[0, 2, 3]);
            // two-layer step: Tr[U′U] pairs U′'s input leg with U's output
            let u1 = tensordot(self.left2[k - 1].view(), g.view(), &[0], &[0]);
            self.left2[k] = tensordot(u1.view(), a.view(), &[0, 2, 3], &[0, 3, 2]);
        }
        self.left_valid = self.left_valid.max(j);
    }

    /// Extends the right caches so `right*[j]` are current.
    fn ensure_right(&mut self, j: usize) {
        if j >= self.right_valid {
            return;
        }
        for k in (j..self.right_valid).rev() {
            let g = self.guess.site(k).view().into_dyn();
            let a = self.target.site(k).view().into_dyn();
            let gc = conj_view(g.view());
            let ac = conj_view(a.view());
            let t1 = tensordot(g.view(), self.right4[k + 1].view(), &[1], &[0]);
            let t2 = tensordot(a.view(), t1.view(), &[1, 2], &[3, 2]);
            let t3 = tensordot(ac.view(), t2.view(), &[1, 3], &[4, 1]);
            let t4 = tensordot(gc.view(), t3.view(), &[1, 2, 3], &[5, 4, 1]);
            self.right4[k] = permute_std(t4, &[3, 2, 1, 0]);
            let u1 = tensordot(g.view(), self.right2[k + 1].view(), &[1], &[0]);
            self.right2[k] = tensordot(u1.view(), a.view(), &[3, 1, 2], &[1, 3, 2]);
        }
        self.right_valid = j;
    }

    /// Quartic-term block `M_small` at `site`, rows and columns indexed by
    /// `(bond_l, bond_r, input leg)`.
    fn m_small(&mut self, site: usize) -> Array2<C64> {
        self.ensure_left(site);
        self.ensure_right(site + 1);
        let a = self.target.site(site).view().into_dyn();
        let ac = conj_view(a.view());
        // double layer of the target at this site: (b, b', y, c, c', w)
        let mid = tensordot(a.view(), ac.view(), &[3], &[3]);
        // attach left: (a, d, b', y, c', w)
        let tl = tensordot(self.left4[site].view(), mid.view(), &[1, 2], &[0, 3]);
        // attach right: (a, d, y, w, a', d')
        let m6 = tensordot(tl.view(), self.right4[site + 1].view(), &[2, 4], &[1, 2]);
        // rows (d, d', w), columns (a, a', y)
        let m = into_matrix(permute_std(m6, &[1, 5, 3, 0, 4, 2]), 3);
        // symmetrize away assembly round-off so the Cholesky fast path
        // sees an exactly Hermitian matrix
        let mh = m.t().mapv(|z| z.conj());
        (&m + &mh) * C64::new(0.5, 0.0)
    }

    /// Linear-term environment at `site` as a rank-4 tensor over
    /// `(bond_l, bond_r, out, in)`; pairs bilinearly with the site tensor,
    /// `Tr[U′U] = Σ B·N_env`.
    fn n_env(&mut self, site: usize) -> ArrayD<C64> {
        self.ensure_left(site);
        self.ensure_right(site + 1);
        let a = self.target.site(site).view().into_dyn();
        let u = tensordot(self.left2[site].view(), a.view(), &[1], &[0]);
        let n4 = tensordot(u.view(), self.right2[site + 1].view(), &[1], &[1]);
        permute_std(n4, &[0, 3, 2, 1])
    }

    /// Full per-site system matrix `M = 1₄ ⊗ M_small`, expanded to act on
    /// the row-major vectorized site tensor `(bond_l, bond_r, out, in)`.
    /// Hermitian and positive semidefinite by construction.
    pub fn environment_m(&mut self, site: usize) -> Result<Array2<C64>> {
        self.check_site(site)?;
        let (gl, gr) = self.dims(site);
        let ms = self.m_small(site);
        let k = gl * gr * 4;
        let mut m = Array2::<C64>::zeros((k * 4, k * 4));
        for d in 0..gl {
            for dp in 0..gr {
                for w in 0..4 {
                    let row_s = ((d * gr + dp) * 4) + w;
                    for aa in 0..gl {
                        for ap in 0..gr {
                            for y in 0..4 {
                                let col_s = ((aa * gr + ap) * 4) + y;
                                let v = ms[[row_s, col_s]];
                                if v != C64::new(0.0, 0.0) {
                                    for x in 0..4 {
                                        let row = ((d * gr + dp) * 4 + x) * 4 + w;
                                        let col = ((aa * gr + ap) * 4 + x) * 4 + y;
                                        m[[row, col]] = v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// Right-hand side of the per-site normal equations, vectorized to
    /// match [`Self::environment_m`].
    pub fn environment_n(&mut self, site: usize) -> Result<Array1<C64>> {
        self.check_site(site)?;
        let n = self.n_env(site).mapv(|z| z.conj());
        let len = n.len();
        Ok(n.into_shape_with_order(IxDyn(&[len]))
            .expect("contiguous rhs")
            .into_dimensionality()
            .expect("rank-1"))
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.guess.n_sites() {
            return Err(Error::DimensionMismatch(format!(
                "site {site} out of range for {} sites",
                self.guess.n_sites()
            )));
        }
        Ok(())
    }

    /// Exact normalized error of the current guess, evaluated through the
    /// environments of `site`.
    fn error_at(&mut self, site: usize) -> Result<f64> {
        self.check_site(site)?;
        let ms = self.m_small(site);
        let nrhs = self.rhs(site);
        let b = self.site_as_block(site);
        Ok(self.error_from_parts(&ms, &nrhs, &b))
    }

    /// Current site tensor reshaped to the block layout: rows
    /// `(bond_l, bond_r, in)`, one column per output leg.
    fn site_as_block(&self, site: usize) -> Array2<C64> {
        let t = self.guess.site(site).view().into_dyn().to_owned();
        into_matrix(permute_std(t, &[0, 1, 3, 2]), 3)
    }

    /// Normal-equation right-hand side in block layout (same row indexing
    /// as `M_small`, one column per output leg).
    fn rhs(&mut self, site: usize) -> Array2<C64> {
        let n = self.n_env(site).mapv(|z| z.conj());
        into_matrix(permute_std(n, &[0, 1, 3, 2]), 3)
    }

    /// `ē = (B†MB − 2 Re B†N + 4ⁿ) / 4ⁿ` summed over the four blocks.
    fn error_from_parts(&self, ms: &Array2<C64>, nrhs: &Array2<C64>, b: &Array2<C64>) -> f64 {
        quadratic_error(ms, nrhs, b, self.norm())
    }

    /// Solves the local normal equations at `site`, writes the optimum
    /// back into the guess, and returns the updated normalized error.
    ///
    /// Cholesky is tried first; a semidefinite or ill-conditioned system
    /// that slips through it would break the monotone-descent guarantee,
    /// so any update that fails to decrease the error is redone with the
    /// spectral pseudo-inverse.
    pub fn update_site(&mut self, site: usize) -> Result<f64> {
        self.check_site(site)?;
        let (gl, gr) = self.dims(site);
        let ms = self.m_small(site);
        let nrhs = self.rhs(site);
        let mut x = match solve_cholesky(&ms, &nrhs) {
            Some(x) => x,
            None => solve_spectral(&ms, &nrhs)?,
        };
        let mut err = self.error_from_parts(&ms, &nrhs, &x);
        if !(err <= self.last_error + 1e-13) {
            let xs = solve_spectral(&ms, &nrhs)?;
            let es = self.error_from_parts(&ms, &nrhs, &xs);
            if es < err {
                x = xs;
                err = es;
            }
        }
        // block layout is (bond_l, bond_r, in) × out; restore (l, r, out, in)
        let xt = x
            .into_shape_with_order(IxDyn(&[gl, gr, 4, 4]))
            .expect("block reshape");
        let site_t = permute_std(xt, &[0, 1, 3, 2])
            .into_dimensionality::<Ix4>()
            .expect("rank-4");
        *self.guess.site_mut(site) = site_t;
        self.left_valid = self.left_valid.min(site);
        self.right_valid = self.right_valid.max(site + 1);
        self.last_error = err;
        Ok(err)
    }

    /// One full back-and-forth pass; returns the error after each site
    /// update.
    pub fn sweep(&mut self) -> Result<Vec<f64>> {
        let n = self.guess.n_sites();
        let mut errs = Vec::with_capacity(2 * n);
        for j in 0..n {
            errs.push(self.update_site(j)?);
        }
        for j in (0..n.saturating_sub(1)).rev() {
            errs.push(self.update_site(j)?);
        }
        self.sweeps_done += 1;
        Ok(errs)
    }
}

/// Evaluates the normalized objective `(B†MB − 2 Re B†N + c) / c` for a
/// site tensor in block layout, clamped at zero against cancellation noise.
pub(crate) fn quadratic_error(
    ms: &Array2<C64>,
    nrhs: &Array2<C64>,
    b: &Array2<C64>,
    c: f64,
) -> f64 {
    let mb = ms.dot(b);
    let quad: f64 = b
        .iter()
        .zip(mb.iter())
        .map(|(x, y)| (x.conj() * y).re)
        .sum();
    let lin: f64 = b
        .iter()
        .zip(nrhs.iter())
        .map(|(x, y)| (x.conj() * y).re)
        .sum();
    ((quad - 2.0 * lin + c) / c).max(0.0)
}

/// Solves `M x = N` for Hermitian positive-semidefinite `M` through its
/// eigendecomposition, dropping eigenvalues below `1e-12 · λ_max`. For
/// rank-deficient `M` this returns the minimum-norm least-squares solution.
pub fn solve_site(m: &Array2<C64>, n: &Array1<C64>) -> Result<Array1<C64>> {
    check_square(m, n.len())?;
    let rhs = n.view().insert_axis(ndarray::Axis(1)).to_owned();
    let x = solve_spectral(m, &rhs)?;
    Ok(x.column(0).to_owned())
}

fn check_square(m: &Array2<C64>, rhs_rows: usize) -> Result<()> {
    if m.ncols() != m.nrows() || rhs_rows != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve expects square M matching rhs, got {}×{} and {} rows",
            m.nrows(),
            m.ncols(),
            rhs_rows
        )));
    }
    Ok(())
}

/// Cholesky attempt; `None` when the factorization rejects the matrix.
fn solve_cholesky(m: &Array2<C64>, rhs: &Array2<C64>) -> Option<Array2<C64>> {
    let f = m.factorizec(UPLO::Lower).ok()?;
    let mut out = Array2::<C64>::zeros(rhs.raw_dim());
    for (j, col) in rhs.columns().into_iter().enumerate() {
        let x = f.solvec(&col.to_owned()).ok()?;
        out.column_mut(j).assign(&x);
    }
    Some(out)
}

/// Pseudo-inverse solve on the well-supported eigenspace. Eigenvalues at or
/// below `1e-12 · λ_max` — including negative ones from indefinite input —
/// are dropped, so this doubles as the clipped solver for approximately
/// assembled systems.
pub(crate) fn solve_spectral(m: &Array2<C64>, rhs: &Array2<C64>) -> Result<Array2<C64>> {
    // eigh on a row-major complex array diagonalizes the transposed
    // buffer, so the true eigenvectors are the conjugated columns of the
    // returned matrix and the pseudo-inverse reads conj(V)·diag(f)·Vᵀ
    let a = m.as_standard_layout().into_owned();
    let (vals, vecs) = a
        .eigh(UPLO::Lower)
        .map_err(|e| Error::SingularOperator(format!("eigendecomposition failed: {e}")))?;
    let lmax = vals.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let cut = SPECTRAL_CUTOFF * lmax;
    let mut w = vecs.t().dot(rhs);
    for (i, &v) in vals.iter().enumerate() {
        let f = if v > cut {
            C64::new(1.0 / v, 0.0)
        } else {
            C64::new(0.0, 0.0)
        };
        w.row_mut(i).mapv_inplace(|z| z * f);
    }
    Ok(vecs.mapv(|z| z.conj()).dot(&w))
}

/// Fits an MPO approximation of `u⁻¹` by sweeping until the normalized
/// error `‖U′U − 1‖²_F / 4ⁿ` stalls.
///
/// Non-convergence within the sweep budget is not an error: the best
/// iterate comes back with `converged = false` in the report.
pub fn mpo_inverse(u: &Mpo, cfg: &InverseConfig) -> Result<(Mpo, InverseReport)> {
    let mut ws = InverseWorkspace::new(u, cfg)?;
    let mut error_history = vec![ws.last_error()];
    let mut trace_infidelity_history = vec![trace_infidelity_mpo(ws.guess())];
    let mut converged = false;
    let mut prev = ws.last_error();
    while ws.sweeps_done() < cfg.max_sweeps {
        error_history.extend(ws.sweep()?);
        trace_infidelity_history.push(trace_infidelity_mpo(ws.guess()));
        let now = ws.last_error();
        if (prev - now).abs() < cfg.tol {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::NoiseKind;
    use crate::circuit::{
        compile_ideal_mpo, compile_noisy_mpo, generate_test_circuit, NoiseProfile,
    };
    use crate::decomp::TruncationConfig;
    use crate::mpo::{apply_mpo_layer, relative_distance_mpo};
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;
    use ndarray_linalg::Eigh;
    use rand::Rng;

    fn unlimited() -> TruncationConfig {
        TruncationConfig {
            max_bond: None,
            cutoff: 0.0,
        }
    }

    fn dense_error(guess: &Mpo, target: &Mpo) -> f64 {
        let gu = guess.to_dense().unwrap();
        let tu = target.to_dense().unwrap();
        let prod = gu.compose(&tu).unwrap();
        let eye = crate::dense::DenseSuperOp::identity(guess.n_sites()).unwrap();
        let mut acc = 0.0;
        for (p, e) in prod.matrix().iter().zip(eye.matrix().iter()) {
            acc += (p - e).norm_sqr();
        }
        acc
    }

    /// Dense objective with `b` substituted at `site` of the guess.
    fn dense_error_with(guess: &Mpo, target: &Mpo, site: usize, b: &Array4<C64>) -> f64 {
        let mut sites = guess.sites().to_vec();
        sites[site] = b.clone();
        dense_error(&Mpo::from_sites(sites).unwrap(), target)
    }

    #[test]
    fn identity_inverts_in_one_sweep() {
        let id = Mpo::identity(3).unwrap();
        let (inv, rep) = mpo_inverse(&id, &InverseConfig::with_bond_dim(1)).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.sweeps_used, 1);
        assert!(rep.final_error <= 1e-14);
        assert!(relative_distance_mpo(&inv, &id).unwrap() <= 1e-12);
    }

    #[test]
    fn environment_m_for_identity_is_scaled_identity() {
        for n in [1usize, 2, 3] {
            let id = Mpo::identity(n).unwrap();
            let mut ws = InverseWorkspace::new(&id, &InverseConfig::with_bond_dim(1)).unwrap();
            let scale = 4f64.powi(n as i32 - 1);
            for site in 0..n {
                let m = ws.environment_m(site).unwrap();
                assert_eq!(m.nrows(), 16);
                for i in 0..16 {
                    for j in 0..16 {
                        let want = if i == j { scale } else { 0.0 };
                        assert_abs_diff_eq!(m[[i, j]].re, want, epsilon = 1e-12);
                        assert_abs_diff_eq!(m[[i, j]].im, 0.0, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn environment_n_for_identity_is_scaled_identity_vector() {
        let id = Mpo::identity(2).unwrap();
        let mut ws = InverseWorkspace::new(&id, &InverseConfig::with_bond_dim(1)).unwrap();
        let n = ws.environment_n(0).unwrap();
        // vectorized identity site: δ_{τσ} over the (out, in) block
        for tau in 0..4 {
            for sig in 0..4 {
                let want = if tau == sig { 4.0 } else { 0.0 };
                let v = n[tau * 4 + sig];
                assert_abs_diff_eq!(v.re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn environments_match_brute_force_gram_matrix() {
        let mut rng = rng_for(41, 0);
        let target = Mpo::random(3, 2, &mut rng).unwrap();
        let guess = Mpo::random(3, 2, &mut rng).unwrap();
        let mut ws = InverseWorkspace::with_guess(&target, guess.clone()).unwrap();
        let site = 1;
        let m = ws.environment_m(site).unwrap();
        let nv = ws.environment_n(site).unwrap();

        // basis expansion: M[i,i'] = ⟨X(e_i), X(e_i')⟩ with X(B) the dense
        // matrix of guess-with-B composed with the target; N[i] = conj Tr[X(e_i)]
        let (gl, gr) = (2usize, 2);
        let dim = gl * gr * 16;
        assert_eq!(m.nrows(), dim);
        let tu = target.to_dense().unwrap();
        let mut xs = Vec::with_capacity(dim);
        for idx in 0..dim {
            let mut b = Array4::<C64>::zeros((gl, gr, 4, 4));
            b.as_slice_mut().unwrap()[idx] = C64::new(1.0, 0.0);
            let mut sites = guess.sites().to_vec();
            sites[site] = b;
            let gd = Mpo::from_sites(sites).unwrap().to_dense().unwrap();
            xs.push(gd.compose(&tu).unwrap());
        }
        for i in 0..dim {
            for j in 0..dim {
                let mut want = C64::new(0.0, 0.0);
                for (a, b) in xs[i].matrix().iter().zip(xs[j].matrix().iter()) {
                    want += a.conj() * b;
                }
                let got = m[[i, j]];
                assert!(
                    (got - want).norm() <= 1e-10 * (1.0 + want.norm()),
                    "M[{i},{j}] = {got} vs {want}"
                );
            }
            let tr: C64 = (0..xs[i].dim()).map(|k| xs[i].matrix()[[k, k]]).sum();
            let want_n = tr.conj();
            assert!((nv[i] - want_n).norm() <= 1e-10 * (1.0 + want_n.norm()));
        }

        // Hermitian and positive semidefinite
        for i in 0..dim {
            for j in 0..dim {
                assert!((m[[i, j]] - m[[j, i]].conj()).norm() <= 1e-12);
            }
        }
        let (vals, _) = m.eigh(UPLO::Lower).unwrap();
        let lmax = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(vals.iter().all(|&v| v >= -1e-10 * lmax));
    }

    #[test]
    fn environment_error_agrees_with_dense_objective() {
        let mut rng = rng_for(77, 0);
        let target = Mpo::random(3, 2, &mut rng).unwrap();
        let guess = Mpo::random(3, 2, &mut rng).unwrap();
        let c = 4f64.powi(3);
        for site in 0..3 {
            let mut ws = InverseWorkspace::with_guess(&target, guess.clone()).unwrap();
            let m = ws.environment_m(site).unwrap();
            let nv = ws.environment_n(site).unwrap();
            for _ in 0..3 {
                let (gl, gr) = {
                    let s = guess.site(site).shape();
                    (s[0], s[1])
                };
                let b = Array4::from_shape_fn((gl, gr, 4, 4), |_| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let bv: Vec<C64> = b.iter().copied().collect();
                let mut quad = 0.0;
                let mut lin = 0.0;
                for i in 0..bv.len() {
                    lin += (bv[i].conj() * nv[i]).re;
                    for j in 0..bv.len() {
                        quad += (bv[i].conj() * m[[i, j]] * bv[j]).re;
                    }
                }
                let e_env = quad - 2.0 * lin + c;
                let e_dense = dense_error_with(&guess, &target, site, &b);
                assert!(
                    (e_env - e_dense).abs() <= 1e-10 * (1.0 + e_dense),
                    "site {site}: {e_env} vs {e_dense}"
                );
            }
        }
    }

    #[test]
    fn reported_error_is_gauge_independent() {
        let spec = generate_test_circuit(
            4,
            4,
            5,
            &NoiseProfile::uniform(NoiseKind::Depolarizing, 1e-2),
        )
        .unwrap();
        let (noisy, _) = compile_noisy_mpo(&spec, &unlimited()).unwrap();
        let (inv, rep) = mpo_inverse(&noisy, &InverseConfig::with_bond_dim(5)).unwrap();
        let raw = rep.final_error * 4f64.powi(4);
        let dense = dense_error(&inv, &noisy);
        assert!(
            (raw - dense).abs() <= 1e-10 * (1.0 + dense),
            "{raw} vs {dense}"
        );
    }

    #[test]
    fn solve_site_with_identity_returns_rhs() {
        let m = Array2::<C64>::eye(8);
        let n = Array1::from_shape_fn(8, |i| C64::new(i as f64, -(i as f64)));
        let x = solve_site(&m, &n).unwrap();
        for i in 0..8 {
            assert!((x[i] - n[i]).norm() <= 1e-14);
        }
    }

    #[test]
    fn solve_site_residual_is_tiny_for_definite_systems() {
        let mut rng = rng_for(3, 0);
        let a = Array2::from_shape_fn((12, 12), |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let ah = a.t().mapv(|z| z.conj());
        let m = ah.dot(&a) + Array2::<C64>::eye(12) * C64::new(0.1, 0.0);
        let n = Array1::from_shape_fn(12, |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let x = solve_site(&m, &n).unwrap();
        let r = m.dot(&x) - &n;
        let rn: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nn: f64 = n.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(rn <= 1e-10 * nn, "residual {rn} vs rhs {nn}");
    }

    #[test]
    fn solve_site_drops_null_space_components() {
        // M = V diag(2, 1, 0) V† for an explicit unitary V: the solution
        // must stay orthogonal to the null direction
        let v = {
            let mut rng = rng_for(9, 0);
            let a = Array2::from_shape_fn((3, 3), |_| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let ah = a.t().mapv(|z| z.conj());
            let h = &a + &ah;
            let (_, vecs) = h.eigh(UPLO::Lower).unwrap();
            vecs
        };
        let lam = Array2::from_diag(&Array1::from(vec![
            C64::new(2.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ]));
        let vh = v.t().mapv(|z| z.conj());
        let m = v.dot(&lam).dot(&vh);
        let n = Array1::from(vec![
            C64::new(1.0, 0.5),
            C64::new(-0.3, 0.2),
            C64::new(0.7, -0.1),
        ]);
        let x = solve_site(&m, &n).unwrap();
        let null_dir = v.column(2);
        let overlap: C64 = null_dir.iter().zip(x.iter()).map(|(a, b)| a.conj() * b).sum();
        assert!(overlap.norm() <= 1e-10);
        // and it solves the system projected onto the range of M
        let coeff: C64 = null_dir.iter().zip(n.iter()).map(|(a, b)| a.conj() * b).sum();
        let n_range = &n - &null_dir.mapv(|z| z * coeff);
        let r = m.dot(&x) - &n_range;
        assert!(r.iter().map(|z| z.norm()).fold(0.0, f64::max) <= 1e-10);
    }

    #[test]
    fn unitary_circuit_inverse_matches_dagger() {
        let spec = generate_test_circuit(4, 4, 11, &NoiseProfile::noiseless()).unwrap();
        let u = compile_ideal_mpo(&spec, &unlimited()).unwrap();
        let (inv, rep) = mpo_inverse(&u, &InverseConfig::with_bond_dim(4)).unwrap();
        assert!(rep.converged, "error history: {:?}", rep.error_history);
        let (prod, _) = apply_mpo_layer(&u, &inv, &unlimited()).unwrap();
        let id = Mpo::identity(4).unwrap();
        assert!(relative_distance_mpo(&prod, &id).unwrap() <= 1e-12);
        let dag = u.dagger().to_dense().unwrap();
        let inv_d = inv.to_dense().unwrap();
        let mut diff = 0.0f64;
        for (a, b) in inv_d.matrix().iter().zip(dag.matrix().iter()) {
            diff += (a - b).norm_sqr();
        }
        assert!(diff.sqrt() <= 1e-8, "‖U′ − U†‖ = {}", diff.sqrt());
    }

    #[test]
    fn error_never_increases_along_the_sweep() {
        let spec = generate_test_circuit(
            4,
            4,
            23,
            &NoiseProfile::uniform(NoiseKind::Depolarizing, 1e-2),
        )
        .unwrap();
        let (noisy, _) = compile_noisy_mpo(&spec, &unlimited()).unwrap();
        let (_, rep) = mpo_inverse(&noisy, &InverseConfig::with_bond_dim(5)).unwrap();
        for w in rep.error_history.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "error increased: {} -> {}",
                w[0],
                w[1]
            );
        }
        assert!(rep.converged);
        assert!(rep.sweeps_used <= 20);
        // fitting the inverse of a trace-preserving channel drives the
        // guess toward trace preservation
        let first = rep.trace_infidelity_history[0];
        let last = *rep.trace_infidelity_history.last().unwrap();
        assert!(last <= 1e-3, "final trace infidelity {last}");
        assert!(last <= first);
    }

    #[test]
    fn noisy_inverse_cancels_noise_far_below_raw_distance() {
        let profile = NoiseProfile::uniform(NoiseKind::Depolarizing, 1e-2);
        let spec = generate_test_circuit(4, 4, 31, &profile).unwrap();
        let ideal = compile_ideal_mpo(&spec, &unlimited()).unwrap();
        let (noisy, _) = compile_noisy_mpo(&spec, &unlimited()).unwrap();
        let (inv, _) = mpo_inverse(&noisy, &InverseConfig::with_bond_dim(5)).unwrap();
        let (prod, _) = apply_mpo_layer(&noisy, &inv, &unlimited()).unwrap();
        let id = Mpo::identity(4).unwrap();
        let resid = relative_distance_mpo(&prod, &id).unwrap();
        let raw = relative_distance_mpo(&noisy, &ideal).unwrap();
        assert!(
            resid <= 1e-3 * raw,
            "inverse residual {resid} vs raw distance {raw}"
        );
    }

    #[test]
    fn random_init_also_converges_on_small_unitaries() {
        let spec = generate_test_circuit(2, 2, 7, &NoiseProfile::noiseless()).unwrap();
        let u = compile_ideal_mpo(&spec, &unlimited()).unwrap();
        let cfg = InverseConfig {
            bond_dim: 4,
            init: InverseInit::Random { seed: 12 },
            ..InverseConfig::default()
        };
        let (inv, rep) = mpo_inverse(&u, &cfg).unwrap();
        assert!(rep.converged);
        let (prod, _) = apply_mpo_layer(&u, &inv, &unlimited()).unwrap();
        let id = Mpo::identity(2).unwrap();
        assert!(relative_distance_mpo(&prod, &id).unwrap() <= 1e-10);
    }

    #[test]
    fn exhausted_sweep_budget_reports_non_convergence() {
        let spec = generate_test_circuit(
            4,
            4,
            3,
            &NoiseProfile::uniform(NoiseKind::AmplitudeDamping, 1e-1),
        )
        .unwrap();
        let (noisy, _) = compile_noisy_mpo(&spec, &unlimited()).unwrap();
        let cfg = InverseConfig {
            bond_dim: 5,
            max_sweeps: 1,
            ..InverseConfig::default()
        };
        let (_, rep) = mpo_inverse(&noisy, &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.sweeps_used, 1);
        // initial value plus one entry per site update (2n − 1 of them)
        assert_eq!(rep.error_history.len(), 1 + 2 * 4 - 1);
        assert_eq!(rep.trace_infidelity_history.len(), 2);
    }

    #[test]
    fn ten_qubit_noisy_inverse_is_accurate() {
        let profile = NoiseProfile::uniform(NoiseKind::Depolarizing, 1e-2);
        let spec = generate_test_circuit(10, 4, 1, &profile).unwrap();
        let ideal = compile_ideal_mpo(&spec, &unlimited()).unwrap();
        let (noisy, _) =
            compile_noisy_mpo(&spec, &TruncationConfig::with_max_bond(5)).unwrap();
        let (inv, rep) = mpo_inverse(&noisy, &InverseConfig::with_bond_dim(5)).unwrap();
        assert!(rep.converged, "history: {:?}", rep.error_history);
        assert!(rep.sweeps_used <= 20);
        let (prod, _) = apply_mpo_layer(&noisy, &inv, &unlimited()).unwrap();
        let id = Mpo::identity(10).unwrap();
        let resid = relative_distance_mpo(&prod, &id).unwrap();
        let raw = relative_distance_mpo(&noisy, &ideal).unwrap();
        assert!(resid <= 1e-3 * raw, "residual {resid}, raw {raw}");
    }
}
