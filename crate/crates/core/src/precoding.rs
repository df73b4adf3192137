//! Beam selection, the pre-beamformer `B = diag(lambda) F^H`, zero-forcing
//! over estimated effective channels and the perfect-CSI baselines.

use crate::error::{Error, Result};
use crate::numerics::{hermitian_solve, Complex64, ComplexMatrix};

/// Gram matrices with a larger eigenvalue spread are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Per-beam gains `lambda` in `[0, 1]^M`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamSelection(Vec<f64>);

impl BeamSelection {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if let Some((m, v)) = lambda
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Contract(format!("lambda[{m}] = {v} outside [0, 1]")));
        }
        Ok(Self(lambda))
    }

    /// Clips every entry into `[0, 1]` (NaN becomes 0).
    pub fn clamped(lambda: Vec<f64>) -> Self {
        Self(
            lambda
                .into_iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn ones(m: usize) -> Self {
        Self(vec![1.0; m])
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

/// `B = diag(lambda) F^H`.
pub fn pre_beamformer(selection: &BeamSelection, dft: &ComplexMatrix) -> Result<ComplexMatrix> {
    let m = dft.nrows();
    if selection.len() != m || !dft.is_square() {
        return Err(Error::InvalidDimension(format!(
            "{} beam gains for a {}x{} DFT",
            selection.len(),
            dft.nrows(),
            dft.ncols()
        )));
    }
    let mut b = dft.adjoint();
    for (r, &l) in selection.as_slice().iter().enumerate() {
        b.row_mut(r).scale_mut(l);
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecoderKind {
    ZfEffective,
    ZfPerfect,
    Mrt,
    /// Transmits nothing; stands in when a precoder could not be formed.
    Silent,
}

/// Linear precoder; row k of `v` is user k's beam.
#[derive(Clone, Debug)]
pub struct Precoder {
    pub v: ComplexMatrix,
    /// `alpha` for zero-forcing on effective channels, `J^2` for the
    /// perfect-CSI baselines.
    pub alpha: f64,
    pub kind: PrecoderKind,
}

impl Precoder {
    pub fn silent(users: usize, antennas: usize) -> Self {
        Self {
            v: ComplexMatrix::zeros(users, antennas),
            alpha: 0.0,
            kind: PrecoderKind::Silent,
        }
    }

    /// `Tr(V V^H)`.
    pub fn power(&self) -> f64 {
        self.v.norm_squared()
    }
}

/// Condition number of a Hermitian Gram matrix from its eigenvalues.
fn gram_condition(gram: &ComplexMatrix) -> f64 {
    let eig = gram.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(min > 0.0) || !max.is_finite() {
        return f64::INFINITY;
    }
    max / min
}

/// `(A^H A)^{-1} A^H` for a tall `A` with full column rank.
fn left_pseudo_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let gram = a.adjoint() * a;
    let cond = gram_condition(&gram);
    if cond > MAX_CONDITION {
        return Err(Error::DegeneratePrecoder(cond));
    }
    hermitian_solve(&gram, &a.adjoint()).map_err(|_| Error::DegeneratePrecoder(cond))
}

/// Zero-forcing on estimated effective channels followed by the
/// pre-beamformer: `V = sqrt(alpha) (G^H G)^{-1} G^H B` with `alpha` set so
/// that `Tr(V V^H) = P_dl`.
pub fn zf_effective(g_hat: &ComplexMatrix, b: &ComplexMatrix, p_dl: f64) -> Result<Precoder> {
    if g_hat.nrows() != b.nrows() {
        return Err(Error::InvalidDimension(format!(
            "estimates have {} rows, pre-beamformer {}",
            g_hat.nrows(),
            b.nrows()
        )));
    }
    let v0 = left_pseudo_inverse(g_hat)?;
    let raw = &v0 * b;
    let power = raw.norm_squared();
    if !(power > 0.0) {
        return Err(Error::DegeneratePrecoder(f64::INFINITY));
    }
    let alpha = p_dl / power;
    Ok(Precoder {
        v: raw * Complex64::new(alpha.sqrt(), 0.0),
        alpha,
        kind: PrecoderKind::ZfEffective,
    })
}

/// The ZF part `V~ = sqrt(alpha) (G^H G)^{-1} G^H` of an effective-channel
/// precoder, for checking `V~ G = sqrt(alpha) I`.
pub fn zf_effective_inner(g_hat: &ComplexMatrix, alpha: f64) -> Result<ComplexMatrix> {
    Ok(left_pseudo_inverse(g_hat)? * Complex64::new(alpha.sqrt(), 0.0))
}

/// Zero-forcing with perfect CSI: `V = J (H^H H)^{-1} H^H`.
pub fn zf_perfect(h: &ComplexMatrix, p_dl: f64) -> Result<Precoder> {
    let v0 = left_pseudo_inverse(h)?;
    let power = v0.norm_squared();
    if !(power > 0.0) {
        return Err(Error::DegeneratePrecoder(f64::INFINITY));
    }
    let j2 = p_dl / power;
    Ok(Precoder {
        v: v0 * Complex64::new(j2.sqrt(), 0.0),
        alpha: j2,
        kind: PrecoderKind::ZfPerfect,
    })
}

/// Maximum ratio transmission: `V = J H^H`.
pub fn mrt_perfect(h: &ComplexMatrix, p_dl: f64) -> Result<Precoder> {
    let power = h.norm_squared();
    if !(power > 0.0) {
        return Err(Error::DegeneratePrecoder(f64::INFINITY));
    }
    let j2 = p_dl / power;
    Ok(Precoder {
        v: h.adjoint() * Complex64::new(j2.sqrt(), 0.0),
        alpha: j2,
        kind: PrecoderKind::Mrt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cn_matrix, dft_matrix, ComplexVector, RngStream};

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn selection_contract() {
        assert!(BeamSelection::new(vec![0.0, 1.0, 0.3]).is_ok());
        assert!(BeamSelection::new(vec![1.2]).is_err());
        assert!(BeamSelection::new(vec![f64::NAN]).is_err());
        assert_eq!(BeamSelection::clamped(vec![-1.0, 2.0, 0.5]).as_slice(), &[0.0, 1.0, 0.5]);
    }

    #[test]
    fn all_ones_is_inverse_dft() {
        let f = dft_matrix(8).unwrap();
        let b = pre_beamformer(&BeamSelection::ones(8), &f).unwrap();
        assert!((&b - f.adjoint()).norm() < 1e-15);
        assert!((&b * b.adjoint() - ComplexMatrix::identity(8, 8)).norm() < 1e-12);
        let z = pre_beamformer(&BeamSelection::zeros(8), &f).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert!(pre_beamformer(&BeamSelection::ones(4), &f).is_err());
    }

    #[test]
    fn circulant_effective_covariance_is_diagonal() {
        let f = dft_matrix(8).unwrap();
        let gains = [0.5, 2.0, 0.0, 1.0, 3.0, 0.2, 0.9, 1.1];
        let lam = [1.0, 0.2, 0.7, 0.0, 1.0, 0.5, 0.3, 0.9];
        let d = ComplexMatrix::from_diagonal(&ComplexVector::from_fn(8, |i, _| c(gains[i])));
        let cov = &f * d * f.adjoint();
        let b = pre_beamformer(&BeamSelection::new(lam.to_vec()).unwrap(), &f).unwrap();
        let eff = &b * &cov * b.adjoint();
        let want = ComplexMatrix::from_diagonal(&ComplexVector::from_fn(8, |i, _| c(lam[i] * lam[i] * gains[i])));
        assert!((eff - want).norm() <= 1e-10);
    }

    #[test]
    fn zf_on_orthonormal_estimates() {
        let mut rng = RngStream::new(4, 0);
        let q = cn_matrix(6, 2, &mut rng).qr().q();
        let p = zf_effective(&q, &ComplexMatrix::identity(6, 6), 20.0).unwrap();
        assert!((p.power() - 20.0).abs() < 1e-9);
        let expect = q.adjoint() * c((20.0_f64 / 2.0).sqrt());
        assert!((&p.v - expect).norm() < 1e-10);
    }

    #[test]
    fn zf_identity_against_normal_equation_oracle() {
        let mut rng = RngStream::new(9, 0);
        let f = dft_matrix(8).unwrap();
        let b = pre_beamformer(&BeamSelection::new(vec![1.0, 0.3, 0.9, 0.0, 0.5, 1.0, 0.8, 0.6]).unwrap(), &f).unwrap();
        let g = cn_matrix(8, 3, &mut rng);
        let p = zf_effective(&g, &b, 20.0).unwrap();
        assert!((p.power() - 20.0).abs() <= 1e-9 * 20.0);
        let inner = zf_effective_inner(&g, p.alpha).unwrap();
        let id = ComplexMatrix::identity(3, 3) * c(p.alpha.sqrt());
        assert!((&inner * &g - &id).norm() <= 1e-8);
        // independent route: pseudo-inverse from nalgebra's SVD
        let pinv = g.clone().pseudo_inverse(1e-14).unwrap();
        assert!((inner - pinv * c(p.alpha.sqrt())).norm() <= 1e-8);
    }

    #[test]
    fn zf_scale_invariance_and_nulled_beams() {
        let mut rng = RngStream::new(10, 0);
        let f = dft_matrix(8).unwrap();
        let lam = vec![1.0, 0.0, 0.9, 0.0, 0.5, 1.0, 0.8, 0.6];
        let b = pre_beamformer(&BeamSelection::new(lam.clone()).unwrap(), &f).unwrap();
        let h = cn_matrix(8, 3, &mut rng);
        let g = &b * &h;
        let p1 = zf_effective(&g, &b, 20.0).unwrap();
        let p2 = zf_effective(&(&g * c(37.0)), &b, 20.0).unwrap();
        assert!((&p1.v - &p2.v).norm() <= 1e-10);
        // beams with lambda = 0 are absent from V's row space
        let beam_coords = &p1.v * &f;
        for (m, l) in lam.iter().enumerate() {
            if *l == 0.0 {
                assert!(beam_coords.column(m).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn zf_rejects_degenerate_estimates() {
        let b = ComplexMatrix::identity(4, 4);
        assert!(matches!(
            zf_effective(&ComplexMatrix::zeros(4, 2), &b, 20.0),
            Err(Error::DegeneratePrecoder(_))
        ));
        let mut g = ComplexMatrix::zeros(4, 2);
        g[(0, 0)] = c(1.0);
        g[(0, 1)] = c(2.0);
        assert!(matches!(zf_effective(&g, &b, 20.0), Err(Error::DegeneratePrecoder(_))));
    }

    #[test]
    fn zf_perfect_nulls_interference() {
        let mut rng = RngStream::new(12, 0);
        let h = cn_matrix(8, 3, &mut rng);
        let p = zf_perfect(&h, 20.0).unwrap();
        assert!((p.power() - 20.0).abs() <= 1e-9);
        let vh = &p.v * &h;
        for k in 0..3 {
            for j in 0..3 {
                if j != k {
                    assert!(vh[(j, k)].norm_sqr() <= 1e-18 * vh[(k, k)].norm_sqr());
                }
            }
        }
        let id = ComplexMatrix::identity(3, 3) * c(p.alpha.sqrt());
        assert!((vh - id).norm() < 1e-9);
        // oracle: SVD pseudo-inverse scaled to the same power
        let pinv = h.clone().pseudo_inverse(1e-14).unwrap();
        let oracle = &pinv * c((20.0 / pinv.norm_squared()).sqrt());
        for (a, b) in p.v.iter().zip(oracle.iter()) {
            assert!((a - b).norm() <= 1e-9);
        }
    }

    #[test]
    fn zf_perfect_orthonormal_rows_follow_channels() {
        let mut rng = RngStream::new(13, 0);
        let q = cn_matrix(6, 2, &mut rng).qr().q();
        let p = zf_perfect(&q, 4.0).unwrap();
        assert!((&p.v - q.adjoint() * c((2.0_f64).sqrt())).norm() < 1e-10);
    }

    #[test]
    fn mrt_power_and_single_user_alignment() {
        let mut rng = RngStream::new(14, 0);
        let h = cn_matrix(8, 3, &mut rng);
        let p = mrt_perfect(&h, 20.0).unwrap();
        assert!((p.power() - 20.0).abs() <= 1e-9);
        let j = (20.0 / h.norm_squared()).sqrt();
        assert!((p.alpha.sqrt() - j).abs() < 1e-14);
        assert!(mrt_perfect(&ComplexMatrix::zeros(4, 2), 1.0).is_err());

        let h1 = cn_matrix(8, 1, &mut rng);
        let a = mrt_perfect(&h1, 20.0).unwrap().v;
        let b = zf_perfect(&h1, 20.0).unwrap().v;
        // colinear: |<a, b>| = |a| |b|
        let inner = (&a * b.adjoint())[(0, 0)].norm();
        assert!((inner - a.norm() * b.norm()).abs() < 1e-9);
    }
}
