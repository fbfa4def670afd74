//! Shared one-dimensional tensor-chain primitives.
//!
//! Both operator chains (MPOs, physical legs grouped to dimension 16) and
//! state chains (MPSs, dimension 4) reduce to sequences of rank-3 tensors
//! with index order (left bond, right bond, physical). Gauge sweeps,
//! SVD truncation, inner products, and the zip-up product all live here and
//! are wrapped by the public types.

use ndarray::{Array3, Array4, ArrayD, Ix2, Ix3, Ix4, IxDyn};
use num_complex::Complex64 as C64;

use crate::contract::{conj_view, permute_std, standardize, standardize_own, tensordot};
use crate::decomp::{svd_truncate, thin_qr, TruncationConfig};
use crate::error::{Error, Result};

/// Checks bond adjacency and boundary bonds of a chain.
pub(crate) fn validate(sites: &[Array3<C64>]) -> Result<()> {
    if sites.is_empty() {
        return Err(Error::DimensionMismatch("empty tensor chain".into()));
    }
    if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[1] != 1 {
        return Err(Error::DimensionMismatch(
            "chain boundary bonds must have dimension 1".into(),
        ));
    }
    for j in 0..sites.len() - 1 {
        if sites[j].shape()[1] != sites[j + 1].shape()[0] {
            return Err(Error::DimensionMismatch(format!(
                "bond mismatch between sites {j} and {}: {} vs {}",
                j + 1,
                sites[j].shape()[1],
                sites[j + 1].shape()[0]
            )));
        }
    }
    Ok(())
}

fn to3(a: ArrayD<C64>) -> Array3<C64> {
    a.into_dimensionality::<Ix3>().expect("rank-3 tensor")
}

/// Left-canonicalizes sites `0..center` (QR, no truncation); the carried
/// triangular factor is absorbed rightward. Site `center` ends up holding the
/// full norm.
pub(crate) fn left_canonicalize(sites: &mut [Array3<C64>], center: usize) -> Result<()> {
    for j in 0..center {
        let (l, r, p) = dims(&sites[j]);
        let m = standardize(sites[j].view().permuted_axes((0, 2, 1)).into_dyn())
            .into_shape_with_order((l * p, r))
            .expect("contiguous");
        let (q, carry) = thin_qr(&m)?;
        let k = q.ncols();
        let qt = q
            .into_shape_with_order((l, p, k))
            .expect("q reshape");
        sites[j] = to3(standardize_own(qt.permuted_axes((0, 2, 1)).into_dyn()));
        let next = tensordot(
            carry.view().into_dyn(),
            sites[j + 1].view().into_dyn(),
            &[1],
            &[0],
        );
        sites[j + 1] = to3(next);
    }
    Ok(())
}

/// Right-canonicalizes sites `center+1..n` (QR, no truncation); the carried
/// factor is absorbed leftward.
pub(crate) fn right_canonicalize(sites: &mut [Array3<C64>], center: usize) -> Result<()> {
    for j in (center + 1..sites.len()).rev() {
        let (l, r, p) = dims(&sites[j]);
        // right isometry: rows (p·r) of the dagger, QR, then undo
        let m = standardize(sites[j].view().permuted_axes((0, 2, 1)).into_dyn())
            .into_shape_with_order((l, p * r))
            .expect("contiguous");
        let md = m.t().mapv(|z| z.conj());
        let (q, rfac) = thin_qr(&md)?;
        let k = q.ncols();
        let qd = standardize_own(q.t().mapv(|z| z.conj()).into_dyn()) // (k, p·r)
            .into_shape_with_order(IxDyn(&[k, p, r]))
            .expect("q reshape");
        sites[j] = to3(permute_std(qd, &[0, 2, 1]));
        let carry = rfac.t().mapv(|z| z.conj()); // (l, k)
        let prev = tensordot(
            sites[j - 1].view().into_dyn(),
            carry.view().into_dyn(),
            &[1],
            &[0],
        ); // (l', p, k)
        sites[j - 1] = to3(permute_std(prev, &[0, 2, 1]));
    }
    Ok(())
}

pub(crate) fn dims(site: &Array3<C64>) -> (usize, usize, usize) {
    let s = site.shape();
    (s[0], s[1], s[2])
}

/// SVD-truncates every bond sweeping left→right. Requires the chain to be
/// right-canonical (gauge center at site 0) so each cut's singular values are
/// the global ones. Returns the discarded squared weight per bond.
pub(crate) fn truncate_ltr(
    sites: &mut [Array3<C64>],
    cfg: &TruncationConfig,
) -> Result<Vec<f64>> {
    let n = sites.len();
    let mut discarded = Vec::with_capacity(n.saturating_sub(1));
    for j in 0..n - 1 {
        let (l, r, p) = dims(&sites[j]);
        let m = standardize(sites[j].view().permuted_axes((0, 2, 1)).into_dyn())
            .into_shape_with_order((l * p, r))
            .expect("contiguous");
        let t = svd_truncate(&m, cfg)?;
        discarded.push(t.discarded);
        let k = t.s.len();
        let u = t.u.into_shape_with_order((l, p, k)).expect("u reshape");
        sites[j] = to3(standardize_own(u.permuted_axes((0, 2, 1)).into_dyn()));
        let sv = {
            let mut vt = t.vt;
            for (i, &s) in t.s.iter().enumerate() {
                vt.row_mut(i).mapv_inplace(|z| z * s);
            }
            vt
        };
        let next = tensordot(
            sv.view().into_dyn(),
            sites[j + 1].view().into_dyn(),
            &[1],
            &[0],
        );
        sites[j + 1] = to3(next);
    }
    Ok(discarded)
}

/// SVD-truncates every bond sweeping right→left. Requires the chain to be
/// left-canonical (gauge center at the last site).
pub(crate) fn truncate_rtl(
    sites: &mut [Array3<C64>],
    cfg: &TruncationConfig,
) -> Result<Vec<f64>> {
    let n = sites.len();
    let mut discarded = vec![0.0; n.saturating_sub(1)];
    for j in (1..n).rev() {
        let (l, r, p) = dims(&sites[j]);
        let m = standardize(sites[j].view().permuted_axes((0, 2, 1)).into_dyn())
            .into_shape_with_order((l, p * r))
            .expect("contiguous");
        let t = svd_truncate(&m, cfg)?;
        discarded[j - 1] = t.discarded;
        let k = t.s.len();
        let vt = t.vt.into_shape_with_order((k, p, r)).expect("vt reshape");
        sites[j] = to3(standardize_own(vt.permuted_axes((0, 2, 1)).into_dyn()));
        let us = {
            let mut u = t.u;
            for (i, &s) in t.s.iter().enumerate() {
                u.column_mut(i).mapv_inplace(|z| z * s);
            }
            u
        };
        let prev = tensordot(
            sites[j - 1].view().into_dyn(),
            us.view().into_dyn(),
            &[1],
            &[0],
        ); // (l', p, k)
        sites[j - 1] = to3(permute_std(prev, &[0, 2, 1]));
    }
    Ok(discarded)
}

/// Σ over all indices of a · conj(b): the Hilbert–Schmidt pairing with `a`
/// linear and `b` conjugated. Chains must share physical dimensions.
pub(crate) fn inner(a: &[Array3<C64>], b: &[Array3<C64>]) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "inner product between chains of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    // transfer matrix E[(bond_a, bond_b)]
    let mut e = ArrayD::<C64>::ones(IxDyn(&[1, 1]));
    for (sa, sb) in a.iter().zip(b) {
        if sa.shape()[2] != sb.shape()[2] {
            return Err(Error::DimensionMismatch(
                "physical dimension mismatch in inner product".into(),
            ));
        }
        let t = tensordot(e.view(), sa.view().into_dyn(), &[0], &[0]); // (bond_b, r_a, p)
        let bc = conj_view(sb.view().into_dyn());
        e = tensordot(t.view(), bc.view(), &[0, 2], &[0, 2]); // (r_a, r_b)
    }
    Ok(e[IxDyn(&[0, 0])])
}

/// Squared Frobenius norm of the chain.
pub(crate) fn norm_sq(a: &[Array3<C64>]) -> f64 {
    inner(a, a).map(|z| z.re.max(0.0)).unwrap_or(0.0)
}

/// Isometry residuals for gauge checks: per site j < center the deviation of
/// Σ_{l,p} A*·A from identity; per site j > center the right-handed version.
pub(crate) fn isometry_residuals(sites: &[Array3<C64>], center: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(sites.len());
    for (j, s) in sites.iter().enumerate() {
        let sd = conj_view(s.view().into_dyn());
        let resid = if j < center {
            let g = tensordot(sd.view(), s.view().into_dyn(), &[0, 2], &[0, 2]);
            let g = g.into_dimensionality::<Ix2>().expect("gram");
            let eye = ndarray::Array2::<C64>::eye(g.nrows());
            (&g - &eye).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        } else if j > center {
            let g = tensordot(s.view().into_dyn(), sd.view(), &[1, 2], &[1, 2]);
            let g = g.into_dimensionality::<Ix2>().expect("gram");
            let eye = ndarray::Array2::<C64>::eye(g.nrows());
            (&g - &eye).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        } else {
            0.0
        };
        out.push(resid);
    }
    out
}

/// Zip-up product of an operator layer over a chain whose sites carry a
/// 4-dimensional contracted leg plus a `keep` leg that rides along
/// (`keep` = 4 for operator targets, 1 for state targets).
///
/// `layer` sites are (b, b', τ_out, s_in); `target` sites are
/// (a, a', s, keep). The result chain has sites (c, c', τ_out, keep) and is
/// truncated on the fly (left→right) followed by a right→left cleanup sweep,
/// both under `cfg`. Returns the per-bond discarded weight (summed over both
/// passes).
pub(crate) fn zip_apply(
    layer: &[Array4<C64>],
    target: &[Array4<C64>],
    cfg: &TruncationConfig,
) -> Result<(Vec<Array4<C64>>, Vec<f64>)> {
    let n = layer.len();
    if target.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "layer has {n} sites, target has {}",
            target.len()
        )));
    }
    let mut out3: Vec<Array3<C64>> = Vec::with_capacity(n);
    let mut keeps: Vec<usize> = Vec::with_capacity(n);
    let mut discarded = vec![0.0; n.saturating_sub(1)];
    // the hard bond cap only applies in the cleanup sweep: mid-zip spectra
    // belong to partial products, and capping them there can discard
    // weight that the not-yet-contracted remainder would have recombined
    let zip_cfg = TruncationConfig {
        max_bond: None,
        cutoff: cfg.cutoff,
    };
    // zipper Z[(c, b, a)]
    let mut z = ArrayD::<C64>::ones(IxDyn(&[1, 1, 1]));
    for j in 0..n {
        let w = &layer[j];
        let t = &target[j];
        if w.shape()[3] != t.shape()[2] {
            return Err(Error::DimensionMismatch(format!(
                "layer input leg {} does not match target leg {} at site {j}",
                w.shape()[3],
                t.shape()[2]
            )));
        }
        let keep = t.shape()[3];
        keeps.push(keep);
        let tau = w.shape()[2];
        // (c, a, b', τ, s)
        let zw = tensordot(z.view(), w.view().into_dyn(), &[1], &[0]);
        // contract a and s with target → (c, b', τ, a', keep)
        let full = tensordot(zw.view(), t.view().into_dyn(), &[1, 4], &[0, 2]);
        let c = full.shape()[0];
        let bp = full.shape()[1];
        let ap = full.shape()[3];
        // rows (c, τ, keep), cols (b', a')
        let perm = standardize(full.view().permuted_axes(IxDyn(&[0, 2, 4, 1, 3])));
        if j < n - 1 {
            let m = perm
                .into_shape_with_order((c * tau * keep, bp * ap))
                .expect("contiguous");
            let tr = svd_truncate(&m, &zip_cfg)?;
            discarded[j] += tr.discarded;
            let k = tr.s.len();
            let u = tr.u.into_shape_with_order((c, tau * keep, k)).expect("u");
            out3.push(to3(standardize_own(u.permuted_axes((0, 2, 1)).into_dyn())));
            let mut vt = tr.vt;
            for (i, &s) in tr.s.iter().enumerate() {
                vt.row_mut(i).mapv_inplace(|x| x * s);
            }
            z = vt
                .into_shape_with_order((k, bp, ap))
                .expect("zipper reshape")
                .into_dyn();
        } else {
            // boundary bonds are 1: fold everything into the final site
            let site = perm
                .into_shape_with_order((c, tau * keep, 1))
                .expect("final site");
            out3.push(to3(standardize_own(site.permuted_axes((0, 2, 1)).into_dyn())));
        }
    }
    // cleanup sweep right→left (chain is left-canonical after the zip)
    let extra = truncate_rtl(&mut out3, cfg)?;
    for (d, e) in discarded.iter_mut().zip(&extra) {
        *d += e;
    }
    let mut out = Vec::with_capacity(n);
    for (j, s3) in out3.into_iter().enumerate() {
        let (l, r, _) = dims(&s3);
        let tau = layer[j].shape()[2];
        let s4 = standardize_own(s3.permuted_axes((0, 2, 1)).into_dyn())
            .into_shape_with_order((l, tau, keeps[j], r))
            .expect("site reshape")
            .permuted_axes((0, 3, 1, 2));
        out.push(
            standardize_own(s4.into_dyn())
                .into_dimensionality::<Ix4>()
                .expect("rank-4 site"),
        );
    }
    Ok((out, discarded))
}

/// Largest bond dimension in a chain.
pub(crate) fn max_bond(sites: &[Array3<C64>]) -> usize {
    sites.iter().map(|s| s.shape()[1]).max().unwrap_or(0)
}
