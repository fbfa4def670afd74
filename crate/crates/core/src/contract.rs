//! Dense tensor contraction helpers.
//!
//! Everything here routes through BLAS matrix multiplication: permute the
//! contracted axes to the matrix boundary, reshape, multiply. The copies this
//! costs are cheap next to the multiply for every tensor size this crate
//! touches.

use ndarray::{Array2, ArrayD, ArrayViewD, IxDyn};
use num_complex::Complex64 as C64;

/// Copies a view into an owned row-major array.
pub(crate) fn standardize(a: ArrayViewD<C64>) -> ArrayD<C64> {
    if a.is_standard_layout() {
        a.to_owned()
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Row-major form of an owned array (no copy when already standard).
pub(crate) fn standardize_own(a: ArrayD<C64>) -> ArrayD<C64> {
    if a.is_standard_layout() {
        a
    } else {
        standardize(a.view())
    }
}

/// Permutes axes of an owned tensor and returns a row-major copy.
pub(crate) fn permute_std(a: ArrayD<C64>, axes: &[usize]) -> ArrayD<C64> {
    standardize_own(a.permuted_axes(IxDyn(axes)))
}

/// Contracts the listed axes of `a` against the listed axes of `b`, matched
/// pairwise in order. The result's axes are `a`'s free axes (original order)
/// followed by `b`'s free axes (original order).
pub(crate) fn tensordot(
    a: ArrayViewD<C64>,
    b: ArrayViewD<C64>,
    a_axes: &[usize],
    b_axes: &[usize],
) -> ArrayD<C64> {
    assert_eq!(a_axes.len(), b_axes.len(), "axis lists must pair up");
    for (&ia, &ib) in a_axes.iter().zip(b_axes) {
        assert_eq!(
            a.shape()[ia],
            b.shape()[ib],
            "contracted axes {ia}/{ib} differ in length"
        );
    }
    let a_free: Vec<usize> = (0..a.ndim()).filter(|i| !a_axes.contains(i)).collect();
    let b_free: Vec<usize> = (0..b.ndim()).filter(|i| !b_axes.contains(i)).collect();
    let m: usize = a_free.iter().map(|&i| a.shape()[i]).product();
    let k: usize = a_axes.iter().map(|&i| a.shape()[i]).product();
    let n: usize = b_free.iter().map(|&i| b.shape()[i]).product();

    let mut a_perm = a_free.clone();
    a_perm.extend_from_slice(a_axes);
    let mut b_perm = b_axes.to_vec();
    b_perm.extend_from_slice(&b_free);

    let mut shape: Vec<usize> = a_free.iter().map(|&i| a.shape()[i]).collect();
    shape.extend(b_free.iter().map(|&i| b.shape()[i]));

    let am = standardize(a.permuted_axes(IxDyn(&a_perm)))
        .into_shape_with_order((m, k))
        .expect("contiguous after standardize");
    let bm = standardize(b.permuted_axes(IxDyn(&b_perm)))
        .into_shape_with_order((k, n))
        .expect("contiguous after standardize");
    let cm = am.dot(&bm);
    cm.into_shape_with_order(IxDyn(&shape))
        .expect("product shape matches")
}

/// Elementwise complex conjugate.
pub(crate) fn conj_view(a: ArrayViewD<C64>) -> ArrayD<C64> {
    a.mapv(|z| z.conj())
}

/// Reshapes an owned row-major tensor into a matrix with the first
/// `nrow_axes` axes flattened into rows and the rest into columns.
pub(crate) fn into_matrix(a: ArrayD<C64>, nrow_axes: usize) -> Array2<C64> {
    let rows: usize = a.shape()[..nrow_axes].iter().product();
    let cols: usize = a.shape()[nrow_axes..].iter().product();
    standardize(a.view())
        .into_shape_with_order((rows, cols))
        .expect("contiguous after standardize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, Dimension};
    use rand::Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> ArrayD<C64> {
        let mut rng = crate::rng::rng_for(seed, 0);
        ArrayD::from_shape_fn(IxDyn(shape), |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Brute-force reference contraction by explicit index loops.
    fn tensordot_naive(
        a: &ArrayD<C64>,
        b: &ArrayD<C64>,
        a_axes: &[usize],
        b_axes: &[usize],
    ) -> ArrayD<C64> {
        let a_free: Vec<usize> = (0..a.ndim()).filter(|i| !a_axes.contains(i)).collect();
        let b_free: Vec<usize> = (0..b.ndim()).filter(|i| !b_axes.contains(i)).collect();
        let mut shape: Vec<usize> = a_free.iter().map(|&i| a.shape()[i]).collect();
        shape.extend(b_free.iter().map(|&i| b.shape()[i]));
        let ksizes: Vec<usize> = a_axes.iter().map(|&i| a.shape()[i]).collect();
        let ktotal: usize = ksizes.iter().product();
        let mut out = ArrayD::<C64>::zeros(IxDyn(&shape));
        for (oidx, val) in out.indexed_iter_mut() {
            let oidx = oidx.slice();
            let mut acc = C64::new(0.0, 0.0);
            for kflat in 0..ktotal {
                // unflatten contracted multi-index (row-major)
                let mut rem = kflat;
                let mut kidx = vec![0usize; ksizes.len()];
                for (pos, &ks) in ksizes.iter().enumerate().rev() {
                    kidx[pos] = rem % ks;
                    rem /= ks;
                }
                let mut ai = vec![0usize; a.ndim()];
                for (pos, &ax) in a_free.iter().enumerate() {
                    ai[ax] = oidx[pos];
                }
                for (pos, &ax) in a_axes.iter().enumerate() {
                    ai[ax] = kidx[pos];
                }
                let mut bi = vec![0usize; b.ndim()];
                for (pos, &ax) in b_free.iter().enumerate() {
                    bi[ax] = oidx[a_free.len() + pos];
                }
                for (pos, &ax) in b_axes.iter().enumerate() {
                    bi[ax] = kidx[pos];
                }
                acc += a[IxDyn(&ai)] * b[IxDyn(&bi)];
            }
            *val = acc;
        }
        out
    }

    fn check_case(ashape: &[usize], bshape: &[usize], a_axes: &[usize], b_axes: &[usize]) {
        let a = random_tensor(ashape, 11);
        let b = random_tensor(bshape, 22);
        let fast = tensordot(a.view(), b.view(), a_axes, b_axes);
        let slow = tensordot_naive(&a, &b, a_axes, b_axes);
        assert_eq!(fast.shape(), slow.shape());
        let err = (&fast - &slow).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "max deviation {err}");
    }

    #[test]
    fn matches_naive_matrix_product() {
        check_case(&[3, 4], &[4, 5], &[1], &[0]);
    }

    #[test]
    fn matches_naive_multi_axis() {
        check_case(&[2, 3, 4], &[4, 2, 5], &[2, 0], &[0, 1]);
    }

    #[test]
    fn matches_naive_interior_axes() {
        check_case(&[2, 5, 3, 2], &[3, 4, 5], &[1, 2], &[2, 0]);
    }

    #[test]
    fn free_axis_order_is_a_then_b() {
        let a = random_tensor(&[2, 3], 1);
        let b = random_tensor(&[3, 4, 5], 2);
        let c = tensordot(a.view(), b.view(), &[1], &[0]);
        assert_eq!(c.shape(), &[2, 4, 5]);
    }

    #[test]
    fn into_matrix_groups_leading_axes() {
        let a = random_tensor(&[2, 3, 4], 3);
        let m = into_matrix(a.clone(), 2);
        assert_eq!(m.shape(), &[6, 4]);
        assert_eq!(m[[5, 3]], a[IxDyn(&[1, 2, 3])]);
    }
}
