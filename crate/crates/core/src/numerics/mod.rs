//! Dense complex linear algebra and seeded Gaussian sampling.
//!
//! Matrices are plain [`nalgebra`] dense matrices over [`Complex64`]; the
//! helpers here add the checked constructors and the few factorizations the
//! rest of the crate needs (DFT, Hermitian solve, PSD square-root factor).

mod linalg;
mod rng;

pub use linalg::{
    dft_matrix, from_row_major, hermitian_asymmetry, hermitian_solve, is_finite, psd_factor,
};
pub use rng::{mix64, RngStream};

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;
pub type RealVector = DVector<f64>;

/// Draws one CN(0, 1) scalar: real and imaginary parts i.i.d. N(0, 1/2).
pub fn standard_cn(rng: &mut RngStream) -> Complex64 {
    use rand_distr::{Distribution, StandardNormal};
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix of i.i.d. CN(0, 1) entries, drawn column by column.
pub fn cn_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            out[(r, c)] = standard_cn(rng);
        }
    }
    out
}

pub fn cn_vector(len: usize, rng: &mut RngStream) -> ComplexVector {
    ComplexVector::from_fn(len, |_, _| standard_cn(rng))
}

/// Returns `factor * w` with `w` a vector of i.i.d. CN(0, 1) entries, i.e.
/// one draw from CN(0, factor factor^H).
///
/// Always consumes exactly `factor.ncols()` complex draws, so the stream
/// position after the call depends only on the factor's rank.
pub fn sample_cn(factor: &ComplexMatrix, rng: &mut RngStream) -> ComplexVector {
    let w = cn_vector(factor.ncols(), rng);
    factor * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_factor_gives_zero_vector() {
        let mut rng = RngStream::new(3, 0);
        let s = ComplexMatrix::zeros(5, 2);
        let h = sample_cn(&s, &mut rng);
        assert_eq!(h.len(), 5);
        assert!(h.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn unit_factor_has_unit_power() {
        let mut rng = RngStream::new(11, 7);
        let s = ComplexMatrix::identity(1, 1);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| sample_cn(&s, &mut rng)[0].norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean |h|^2 = {mean}");
    }

    #[test]
    fn draws_are_reproducible() {
        let s = ComplexMatrix::from_fn(3, 2, |r, c| Complex64::new(r as f64, c as f64 + 0.5));
        let a = sample_cn(&s, &mut RngStream::new(99, 4));
        let b = sample_cn(&s, &mut RngStream::new(99, 4));
        assert_eq!(a, b);
        let c = sample_cn(&s, &mut RngStream::new(99, 5));
        assert_ne!(a, c);
    }

    #[test]
    fn per_component_variance_is_half() {
        let mut rng = RngStream::new(1, 1);
        let n = 200_000;
        let (mut re2, mut im2) = (0.0, 0.0);
        for _ in 0..n {
            let z = standard_cn(&mut rng);
            re2 += z.re * z.re;
            im2 += z.im * z.im;
        }
        assert!((re2 / n as f64 - 0.5).abs() < 0.01);
        assert!((im2 / n as f64 - 0.5).abs() < 0.01);
    }
}
