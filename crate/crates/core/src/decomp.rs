//! Thin SVD / QR wrappers with rank truncation.
//!
//! All tensor-network truncation funnels through [`svd_truncate`] so the
//! backend choice (divide-and-conquer SVD) and the rank rule live in one
//! place. Singular values are cut relative to the largest one; an explicit
//! bond cap, when present, wins over the cutoff.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{JobSvd, SVDDC, QR};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Truncation policy for SVD-based compression.
#[derive(Debug, Clone, Copy)]
pub struct TruncationConfig {
    /// Hard cap on the kept rank; `None` keeps everything above the cutoff.
    pub max_bond: Option<usize>,
    /// Relative singular-value cutoff: values below `cutoff · s_max` are
    /// dropped.
    pub cutoff: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            max_bond: None,
            cutoff: 1e-14,
        }
    }
}

impl TruncationConfig {
    pub fn with_max_bond(max_bond: usize) -> Self {
        Self {
            max_bond: Some(max_bond),
            ..Self::default()
        }
    }
}

/// Per-bond record of what a truncation discarded.
#[derive(Debug, Clone, Default)]
pub struct TruncationReport {
    /// Sum of discarded squared singular values, one entry per touched bond.
    pub discarded: Vec<f64>,
    /// Largest bond dimension after the operation.
    pub max_bond_after: usize,
}

impl TruncationReport {
    /// Total discarded squared weight across all bonds.
    pub fn total_discarded(&self) -> f64 {
        self.discarded.iter().sum()
    }

    /// Folds another report into this one (summing per-bond entries when the
    /// lengths match, concatenating otherwise is not meaningful — callers
    /// accumulate totals instead).
    pub fn absorb(&mut self, other: &TruncationReport) {
        if self.discarded.len() == other.discarded.len() {
            for (a, b) in self.discarded.iter_mut().zip(&other.discarded) {
                *a += b;
            }
        } else if self.discarded.is_empty() {
            self.discarded = other.discarded.clone();
        } else {
            // different bond structure: keep totals in slot 0
            let t = other.total_discarded();
            if self.discarded.is_empty() {
                self.discarded.push(t);
            } else {
                self.discarded[0] += t;
            }
        }
        self.max_bond_after = self.max_bond_after.max(other.max_bond_after);
    }
}

/// Result of a truncated SVD: `m ≈ u · diag(s) · vt` with `kept` columns.
pub struct SvdTrunc {
    pub u: Array2<C64>,
    pub s: Array1<f64>,
    pub vt: Array2<C64>,
    /// Sum of squared singular values that were dropped.
    pub discarded: f64,
}

/// Thin SVD with rank truncation per `cfg`. Always keeps at least one
/// singular value so bond dimensions never collapse to zero.
pub fn svd_truncate(m: &Array2<C64>, cfg: &TruncationConfig) -> Result<SvdTrunc> {
    let (u_opt, s, vt_opt) = m
        .svddc(JobSvd::Some)
        .map_err(|e| Error::Backend(format!("SVD failed: {e}")))?;
    let u = u_opt.ok_or_else(|| Error::Backend("SVD returned no U".into()))?;
    let vt = vt_opt.ok_or_else(|| Error::Backend("SVD returned no Vt".into()))?;
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = cfg.cutoff * smax;
    let mut kept = s.iter().take_while(|&&x| x > threshold).count().max(1);
    if let Some(cap) = cfg.max_bond {
        kept = kept.min(cap.max(1));
    }
    let discarded: f64 = s.iter().skip(kept).map(|x| x * x).sum();
    Ok(SvdTrunc {
        u: u.slice_axis(Axis(1), (0..kept).into()).to_owned(),
        s: s.slice(ndarray::s![0..kept]).to_owned(),
        vt: vt.slice_axis(Axis(0), (0..kept).into()).to_owned(),
        discarded,
    })
}

/// Thin QR decomposition: `m = q · r` with q having orthonormal columns.
pub fn thin_qr(m: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let (q, r) = m
        .qr()
        .map_err(|e| Error::Backend(format!("QR failed: {e}")))?;
    Ok((q, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<C64> {
        let mut rng = crate::rng::rng_for(seed, 13);
        Array2::from_shape_fn((rows, cols), |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn frob_sq(m: &Array2<C64>) -> f64 {
        m.iter().map(|z| z.norm_sqr()).sum()
    }

    #[test]
    fn untruncated_svd_reconstructs() {
        let m = random_matrix(6, 9, 1);
        let t = svd_truncate(&m, &TruncationConfig::default()).unwrap();
        let sm = Array2::from_diag(&t.s.mapv(|x| C64::new(x, 0.0)));
        let back = t.u.dot(&sm).dot(&t.vt);
        assert!(frob_sq(&(&back - &m)) < 1e-24);
        assert!(t.discarded < 1e-24);
    }

    #[test]
    fn truncation_error_equals_discarded_weight() {
        let m = random_matrix(8, 8, 2);
        let cfg = TruncationConfig {
            max_bond: Some(3),
            cutoff: 0.0,
        };
        let t = svd_truncate(&m, &cfg).unwrap();
        assert_eq!(t.s.len(), 3);
        let sm = Array2::from_diag(&t.s.mapv(|x| C64::new(x, 0.0)));
        let back = t.u.dot(&sm).dot(&t.vt);
        let err = frob_sq(&(&back - &m));
        assert!(
            (err - t.discarded).abs() < 1e-10 * err.max(1.0),
            "Eckart–Young residual mismatch: {err} vs {}",
            t.discarded
        );
    }

    #[test]
    fn cutoff_drops_small_singular_values() {
        // rank-2 matrix plus nothing: exact rank detection via relative cutoff
        let a = random_matrix(7, 2, 3);
        let b = random_matrix(2, 5, 4);
        let m = a.dot(&b);
        let t = svd_truncate(&m, &TruncationConfig::default()).unwrap();
        assert_eq!(t.s.len(), 2);
    }

    #[test]
    fn qr_orthonormal_and_reconstructs() {
        for (rows, cols) in [(8, 5), (5, 8), (6, 6)] {
            let m = random_matrix(rows, cols, 5);
            let (q, r) = thin_qr(&m).unwrap();
            let back = q.dot(&r);
            assert!(frob_sq(&(&back - &m)) < 1e-24);
            let qdq = q.t().mapv(|z| z.conj()).dot(&q);
            let eye = Array2::<C64>::eye(qdq.nrows());
            assert!(frob_sq(&(&qdq - &eye)) < 1e-24);
        }
    }
}
