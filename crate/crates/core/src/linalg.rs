//! Complex matrix products routed through real GEMM kernels.
//!
//! Generic complex products in nalgebra run a plain triple loop; splitting
//! into real and imaginary parts lets the optimised `f64` kernel do the work.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::array::CMatrix;

fn split(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

fn join(re: DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    re.zip_map(im, Complex64::new)
}

/// `A B`.
pub fn mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let mut re = &ar * &br;
    re.gemm(-1.0, &ai, &bi, 1.0);
    let mut im = &ar * &bi;
    im.gemm(1.0, &ai, &br, 1.0);
    join(re, &im)
}

/// `Aᴴ B`.
pub fn ad_mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), b.nrows(), "inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let (art, ait) = (ar.transpose(), ai.transpose());
    let mut re = &art * &br;
    re.gemm(1.0, &ait, &bi, 1.0);
    let mut im = &art * &bi;
    im.gemm(-1.0, &ait, &br, 1.0);
    join(re, &im)
}

/// `A Bᴴ`.
pub fn mul_ad(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.ncols(), "inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let (brt, bit) = (br.transpose(), bi.transpose());
    let mut re = &ar * &brt;
    re.gemm(1.0, &ai, &bit, 1.0);
    let mut im = &ai * &brt;
    im.gemm(-1.0, &ar, &bit, 1.0);
    join(re, &im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, r: usize, c: usize) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(r, c, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn products_match_generic_versions() {
        let a = random(1, 7, 5);
        let b = random(2, 5, 4);
        let c = random(3, 7, 4);
        let d = random(4, 6, 5);
        assert!((mul(&a, &b) - &a * &b).norm() < 1e-12);
        assert!((ad_mul(&a, &c) - a.ad_mul(&c)).norm() < 1e-12);
        assert!((mul_ad(&a, &d) - &a * d.adjoint()).norm() < 1e-12);
    }
}
