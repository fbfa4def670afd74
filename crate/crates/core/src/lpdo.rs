//! Locally purified channel chains.
//!
//! An [`Lpdo`] stores a channel through one layer of local operators with an
//! extra Kraus leg per site: rank-5 tensors (left bond, right bond, kraus,
//! out, in) whose operator legs act on a bare qubit (dimension 2). Tracing a
//! copy of the chain against its conjugate over the Kraus legs produces the
//! operator-sum superoperator; [`lpdo_to_mpo`] performs that contraction
//! site-by-site, squaring the bond dimensions.

use ndarray::{Array4, ArrayViewD, Ix5, IxDyn};
use num_complex::Complex64 as C64;

use crate::contract::{conj_view, permute_std, standardize_own, tensordot};
use crate::error::{Error, Result};
use crate::mpo::Mpo;

pub type Array5 = ndarray::Array<C64, Ix5>;

/// Purified channel chain; site index order (l, r, kraus, out, in).
#[derive(Debug, Clone)]
pub struct Lpdo {
    sites: Vec<Array5>,
}

impl Lpdo {
    pub fn from_sites(sites: Vec<Array5>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::DimensionMismatch("empty LPDO".into()));
        }
        if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[1] != 1 {
            return Err(Error::DimensionMismatch(
                "LPDO boundary bonds must have dimension 1".into(),
            ));
        }
        for (j, s) in sites.iter().enumerate() {
            if s.shape()[3] != 2 || s.shape()[4] != 2 {
                return Err(Error::DimensionMismatch(format!(
                    "site {j} operator legs must be 2×2, got {}×{}",
                    s.shape()[3],
                    s.shape()[4]
                )));
            }
            if j + 1 < sites.len() && s.shape()[1] != sites[j + 1].shape()[0] {
                return Err(Error::DimensionMismatch(format!(
                    "bond mismatch between LPDO sites {j} and {}",
                    j + 1
                )));
            }
        }
        Ok(Self { sites })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Array5] {
        &self.sites
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1]
            .iter()
            .map(|s| s.shape()[1])
            .collect()
    }

    pub fn kraus_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.shape()[2]).collect()
    }
}

/// Contracts the purified chain against its conjugate over the Kraus legs,
/// yielding the channel's MPO. Bond dimensions square; the output physical
/// leg groups (layer, conjugate layer) with the layer index major, matching
/// the crate's grouped basis.
pub fn lpdo_to_mpo(lpdo: &Lpdo) -> Result<Mpo> {
    let mut sites = Vec::with_capacity(lpdo.n_sites());
    for a in &lpdo.sites {
        let (l, r) = (a.shape()[0], a.shape()[1]);
        let ac = conj_view(a.view().into_dyn());
        // (l, r, i, s) ⊗ (l̄, r̄, ī, s̄) over kraus → (l, r, i, s, l̄, r̄, ī, s̄)
        let t = tensordot(a.view().into_dyn(), ac.view(), &[2], &[2]);
        let t = permute_std(t, &[0, 4, 1, 5, 2, 6, 3, 7]); // (l, l̄, r, r̄, i, ī, s, s̄)
        let site: Array4<C64> = t
            .into_shape_with_order((l * l, r * r, 4, 4))
            .expect("grouped site")
            .into_dimensionality()
            .expect("rank-4");
        sites.push(site);
    }
    Mpo::from_sites(sites)
}

/// Enumerates the global Kraus operators of the chain by fixing one Kraus
/// index per site and contracting the bonds (dense reference; small n only).
pub fn lpdo_global_kraus(lpdo: &Lpdo) -> Result<Vec<ndarray::Array2<C64>>> {
    let n = lpdo.n_sites();
    if n > crate::dense::DENSE_SUPEROP_QUBIT_CAP {
        return Err(Error::DenseCapExceeded {
            limit: crate::dense::DENSE_SUPEROP_QUBIT_CAP,
            requested: n,
        });
    }
    let kraus_dims = lpdo.kraus_dims();
    let total: usize = kraus_dims.iter().product();
    let dim = 1usize << n;
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut nu = vec![0usize; n];
        for j in (0..n).rev() {
            nu[j] = rem % kraus_dims[j];
            rem /= kraus_dims[j];
        }
        // accumulate T[(i₀ s₀ i₁ s₁ …), bond]
        let mut acc = ndarray::ArrayD::<C64>::ones(IxDyn(&[1, 1]));
        for (j, a) in lpdo.sites.iter().enumerate() {
            let slice: ArrayViewD<C64> = a.index_axis(ndarray::Axis(2), nu[j]).into_dyn(); // (l, r, i, s)
            let t = tensordot(acc.view(), slice, &[1], &[0]); // (prev, r, i, s)
            let prev = t.shape()[0];
            let r = t.shape()[1];
            acc = standardize_own(t.permuted_axes(IxDyn(&[0, 2, 3, 1])))
                .into_shape_with_order(IxDyn(&[prev * 4, r]))
                .expect("accumulator");
        }
        let legs = acc
            .into_shape_with_order(IxDyn(&vec![2; 2 * n]))
            .expect("interleaved");
        let mut perm = Vec::with_capacity(2 * n);
        perm.extend((0..n).map(|j| 2 * j));
        perm.extend((0..n).map(|j| 2 * j + 1));
        let m = permute_std(legs, &perm)
            .into_shape_with_order((dim, dim))
            .expect("matrix")
            .into_dimensionality()
            .expect("rank-2");
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{make_noise_superop, NoiseKind};
    use crate::dense::{relative_distance, superop_from_kraus};
    use ndarray::Array2;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_lpdo(n: usize, bond: usize, kraus: usize, seed: u64) -> Lpdo {
        let mut rng = crate::rng::rng_for(seed, 3);
        let mut sites = Vec::with_capacity(n);
        for j in 0..n {
            let dl = if j == 0 { 1 } else { bond };
            let dr = if j == n - 1 { 1 } else { bond };
            sites.push(Array5::from_shape_fn((dl, dr, kraus, 2, 2), |_| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }));
        }
        Lpdo::from_sites(sites).unwrap()
    }

    #[test]
    fn dephasing_encoding_matches_channel_superop() {
        let eps: f64 = 0.2;
        let mut site = Array5::zeros((1, 1, 2, 2, 2));
        let a = (1.0 - eps).sqrt();
        let b = eps.sqrt();
        site[[0, 0, 0, 0, 0]] = c(a, 0.0);
        site[[0, 0, 0, 1, 1]] = c(a, 0.0);
        site[[0, 0, 1, 0, 0]] = c(b, 0.0);
        site[[0, 0, 1, 1, 1]] = c(-b, 0.0);
        let lpdo = Lpdo::from_sites(vec![site]).unwrap();
        let mpo = lpdo_to_mpo(&lpdo).unwrap();
        let expect = make_noise_superop(NoiseKind::Dephasing, 1, eps).unwrap();
        assert!(relative_distance(&mpo.to_dense().unwrap(), &expect).unwrap() < 1e-28);
    }

    #[test]
    fn bond_dimensions_square_under_contraction() {
        let lpdo = random_lpdo(3, 3, 2, 1);
        assert_eq!(lpdo.bond_dims(), vec![3, 3]);
        let mpo = lpdo_to_mpo(&lpdo).unwrap();
        assert_eq!(mpo.bond_dims(), vec![9, 9]);
    }

    #[test]
    fn contraction_matches_global_kraus_expansion() {
        let lpdo = random_lpdo(3, 2, 2, 7);
        let mpo = lpdo_to_mpo(&lpdo).unwrap();
        let kraus = lpdo_global_kraus(&lpdo).unwrap();
        assert_eq!(kraus.len(), 8);
        let oracle = superop_from_kraus(&kraus).unwrap();
        let d = relative_distance(&mpo.to_dense().unwrap(), &oracle).unwrap();
        assert!(d < 1e-20, "distance {d}");
    }

    #[test]
    fn unitary_kraus_dim_one_round_trips() {
        let h = 1.0 / 2f64.sqrt();
        let mut site = Array5::zeros((1, 1, 1, 2, 2));
        site[[0, 0, 0, 0, 0]] = c(h, 0.0);
        site[[0, 0, 0, 0, 1]] = c(h, 0.0);
        site[[0, 0, 0, 1, 0]] = c(h, 0.0);
        site[[0, 0, 0, 1, 1]] = c(-h, 0.0);
        let lpdo = Lpdo::from_sites(vec![site]).unwrap();
        let mpo = lpdo_to_mpo(&lpdo).unwrap();
        let hmat = Array2::from_shape_fn((2, 2), |(i, j)| {
            c([[h, h], [h, -h]][i][j], 0.0)
        });
        let expect = superop_from_kraus(&[hmat]).unwrap();
        assert!(relative_distance(&mpo.to_dense().unwrap(), &expect).unwrap() < 1e-28);
    }

    #[test]
    fn rejects_malformed_sites() {
        assert!(Lpdo::from_sites(vec![]).is_err());
        let bad = Array5::zeros((2, 1, 1, 2, 2));
        assert!(Lpdo::from_sites(vec![bad]).is_err());
    }
}
