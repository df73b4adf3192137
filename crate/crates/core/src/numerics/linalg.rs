use std::f64::consts::PI;

use super::{Complex64, ComplexMatrix};
use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-10;

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Builds a matrix from row-major entries, rejecting NaN/Inf.
pub fn from_row_major(rows: usize, cols: usize, entries: &[Complex64]) -> Result<ComplexMatrix> {
    if rows * cols != entries.len() {
        return Err(Error::InvalidDimension(format!(
            "{rows}x{cols} matrix from {} entries",
            entries.len()
        )));
    }
    let m = ComplexMatrix::from_row_slice(rows, cols, entries);
    if !is_finite(&m) {
        return Err(Error::NonFinite("matrix entries"));
    }
    Ok(m)
}

/// Unitary DFT matrix, `[F]_{m,n} = exp(-j 2 pi m n / M) / sqrt(M)` with
/// zero-based `m, n`.
pub fn dft_matrix(m: usize) -> Result<ComplexMatrix> {
    if m == 0 {
        return Err(Error::InvalidDimension("DFT size must be >= 1".into()));
    }
    let scale = 1.0 / (m as f64).sqrt();
    Ok(ComplexMatrix::from_fn(m, m, |r, c| {
        // reduce m*n mod M first so large products keep full phase accuracy
        let k = (r * c) % m;
        Complex64::from_polar(scale, -2.0 * PI * k as f64 / m as f64)
    }))
}

/// `||A - A^H||_F / ||A||_F` (0 for the zero matrix).
pub fn hermitian_asymmetry(a: &ComplexMatrix) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.adjoint()).norm() / norm
}

fn check_hermitian(a: &ComplexMatrix, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Contract(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = hermitian_asymmetry(a);
    if asym > HERMITIAN_TOL {
        return Err(Error::Contract(format!(
            "{what} is not Hermitian (relative asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Solves `A X = Y` for Hermitian positive definite `A` via Cholesky.
pub fn hermitian_solve(a: &ComplexMatrix, y: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_hermitian(a, "system matrix")?;
    if y.nrows() != a.nrows() {
        return Err(Error::InvalidDimension(format!(
            "right-hand side has {} rows, system is {}x{}",
            y.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    let l = cholesky_lower(a).ok_or(Error::Singular)?;
    let n = a.nrows();
    let mut x = y.clone();
    for col in 0..x.ncols() {
        // L z = y
        for i in 0..n {
            let mut acc = x[(i, col)];
            for k in 0..i {
                acc -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = acc / l[(i, i)];
        }
        // L^H x = z
        for i in (0..n).rev() {
            let mut acc = x[(i, col)];
            for k in i + 1..n {
                acc -= l[(k, i)].conj() * x[(k, col)];
            }
            x[(i, col)] = acc / l[(i, i)];
        }
    }
    if !is_finite(&x) {
        return Err(Error::Singular);
    }
    Ok(x)
}

/// Lower Cholesky factor of the Hermitian part of `a`; `None` when a pivot
/// is not clearly positive.
fn cholesky_lower(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0_f64, f64::max);
    let pivot_tol = max_diag * n as f64 * f64::EPSILON;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > pivot_tol) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            // average the two triangles so tiny asymmetry does not bias the factor
            let mut acc = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / djj;
        }
    }
    Some(l)
}

/// Square-root factor `S` (M x r) of a Hermitian PSD matrix with
/// `S S^H = C`, where `r` is the numerical rank.
///
/// Eigenvalues down to `-1e-9 trace(C) / M` are treated as rounding noise
/// and clamped to zero; anything more negative is a contract error.
pub fn psd_factor(c: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_hermitian(c, "covariance")?;
    let m = c.nrows();
    if m == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    let sym = (c + c.adjoint()) * Complex64::new(0.5, 0.0);
    let trace: f64 = (0..m).map(|i| sym[(i, i)].re).sum();
    let eig = sym.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v));
    let neg_tol = 1e-9 * trace.abs().max(max_eig) / m as f64;
    if let Some(&worst) = eig
        .eigenvalues
        .iter()
        .find(|&&v| v < -neg_tol)
    {
        return Err(Error::Contract(format!(
            "covariance is not PSD (eigenvalue {worst:e})"
        )));
    }
    let keep_tol = max_eig * (m as f64) * 1e-13;
    let kept: Vec<usize> = (0..m)
        .filter(|&i| max_eig > 0.0 && eig.eigenvalues[i] > keep_tol)
        .collect();
    let mut s = ComplexMatrix::zeros(m, kept.len());
    for (j, &i) in kept.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt();
        s.set_column(j, &(eig.eigenvectors.column(i) * Complex64::new(scale, 0.0)));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cn_matrix, RngStream};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Gaussian elimination with partial pivoting, column by column.
    /// Kept deliberately naive: it is the reference the Cholesky path is
    /// checked against.
    fn gauss_solve(a: &ComplexMatrix, y: &ComplexMatrix) -> ComplexMatrix {
        let n = a.nrows();
        let mut aug: Vec<Vec<Complex64>> = (0..n)
            .map(|r| {
                let mut row: Vec<Complex64> = (0..n).map(|c| a[(r, c)]).collect();
                row.extend((0..y.ncols()).map(|c| y[(r, c)]));
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| aug[i][col].norm().total_cmp(&aug[j][col].norm()))
                .unwrap();
            aug.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = aug[r][col] / aug[col][col];
                    for k in col..aug[r].len() {
                        let v = aug[col][k];
                        aug[r][k] -= f * v;
                    }
                }
            }
        }
        ComplexMatrix::from_fn(n, y.ncols(), |r, c| aug[r][n + c] / aug[r][r])
    }

    #[test]
    fn dft_small_cases() {
        assert!(matches!(dft_matrix(0), Err(Error::InvalidDimension(_))));
        let f1 = dft_matrix(1).unwrap();
        assert_eq!(f1[(0, 0)], c(1.0, 0.0));
        let f4 = dft_matrix(4).unwrap();
        assert!((f4[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        // (1,1): exp(-j pi/2)/2 = -j/2
        assert!((f4[(1, 1)] - c(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn dft_is_unitary() {
        for m in [1, 2, 4, 8, 16, 64] {
            let f = dft_matrix(m).unwrap();
            let err = (&f * f.adjoint() - ComplexMatrix::identity(m, m)).norm();
            assert!(err <= 1e-10, "M={m}: {err:e}");
            let scale = 1.0 / (m as f64).sqrt();
            assert!(f.iter().all(|z| (z.norm() - scale).abs() < 1e-14));
        }
        let f8 = dft_matrix(8).unwrap();
        assert!((&f8 * f8.adjoint() - ComplexMatrix::identity(8, 8)).norm() <= 1e-12);
    }

    #[test]
    fn row_major_constructor_checks() {
        let m = from_row_major(2, 3, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0), c(5.0, 0.0), c(6.0, 0.0)]).unwrap();
        assert_eq!(m[(0, 2)], c(3.0, 0.0));
        assert_eq!(m[(1, 0)], c(4.0, 0.0));
        assert!(from_row_major(2, 2, &[c(1.0, 0.0)]).is_err());
        assert!(matches!(
            from_row_major(1, 1, &[c(f64::NAN, 0.0)]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn solve_identity_and_scaled() {
        let mut rng = RngStream::new(2, 0);
        let y = cn_matrix(3, 2, &mut rng);
        let x = hermitian_solve(&ComplexMatrix::identity(3, 3), &y).unwrap();
        assert!((x - &y).norm() < 1e-15);

        let a = ComplexMatrix::identity(2, 2) * c(2.0, 0.0);
        let x = hermitian_solve(&a, &ComplexMatrix::identity(2, 2)).unwrap();
        assert!((x - ComplexMatrix::identity(2, 2) * c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_matches_gauss_oracle() {
        let mut rng = RngStream::new(17, 0);
        for _ in 0..20 {
            let g = cn_matrix(5, 5, &mut rng);
            let a = &g * g.adjoint() + ComplexMatrix::identity(5, 5);
            let y = cn_matrix(5, 3, &mut rng);
            let x = hermitian_solve(&a, &y).unwrap();
            let oracle = gauss_solve(&a, &y);
            assert!((&a * &x - &y).norm() <= 1e-8 * y.norm());
            assert!((&x - &oracle).norm() <= 1e-10 * oracle.norm());
        }
    }

    #[test]
    fn solve_rejects_bad_inputs() {
        let mut a = ComplexMatrix::identity(2, 2);
        a[(0, 1)] = c(0.3, 0.0);
        let y = ComplexMatrix::identity(2, 2);
        assert!(matches!(hermitian_solve(&a, &y), Err(Error::Contract(_))));

        let indefinite = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        assert!(matches!(hermitian_solve(&indefinite, &y), Err(Error::Singular)));
        assert!(matches!(
            hermitian_solve(&ComplexMatrix::zeros(2, 2), &y),
            Err(Error::Singular)
        ));
        assert!(matches!(
            hermitian_solve(&ComplexMatrix::identity(3, 3), &y),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn factor_identity_and_rank_one() {
        let s = psd_factor(&ComplexMatrix::identity(4, 4)).unwrap();
        assert_eq!(s.ncols(), 4);
        assert!((&s * s.adjoint() - ComplexMatrix::identity(4, 4)).norm() < 1e-12);

        let a = ComplexMatrix::from_fn(6, 1, |m, _| Complex64::from_polar(1.0, 0.7 * m as f64));
        let cov = &a * a.adjoint();
        let s = psd_factor(&cov).unwrap();
        assert_eq!(s.ncols(), 1);
        assert!((&s * s.adjoint() - &cov).norm() <= 1e-8 * cov.norm());
    }

    #[test]
    fn factor_random_psd() {
        let mut rng = RngStream::new(23, 0);
        for rank in [1, 3, 8] {
            let g = cn_matrix(8, rank, &mut rng);
            let cov = &g * g.adjoint();
            let s = psd_factor(&cov).unwrap();
            assert_eq!(s.ncols(), rank);
            assert!((&s * s.adjoint() - &cov).norm() <= 1e-8 * cov.norm());
        }
    }

    #[test]
    fn factor_rejects_non_hermitian_and_indefinite() {
        let mut a = ComplexMatrix::identity(3, 3);
        a[(2, 0)] = c(0.0, 1.0);
        assert!(matches!(psd_factor(&a), Err(Error::Contract(_))));
        let d = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(psd_factor(&d), Err(Error::Contract(_))));
        assert_eq!(psd_factor(&ComplexMatrix::zeros(3, 3)).unwrap().ncols(), 0);
    }
}
