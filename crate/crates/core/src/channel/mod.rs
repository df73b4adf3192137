//! ULA scattering model: steering vectors, multipath covariances, their
//! first-column summaries and instantaneous Rayleigh channel draws.

mod io;

use std::f64::consts::PI;

use rand::Rng;

pub use io::{read_scenario_set, write_scenario_set, ScenarioSetHeader};

use crate::error::{Error, Result};
use crate::numerics::{
    hermitian_asymmetry, psd_factor, sample_cn, Complex64, ComplexMatrix, ComplexVector,
    RealVector, RngStream,
};

/// Default angular aperture, 60 degrees.
pub const DEFAULT_THETA_MAX: f64 = PI / 3.0;

/// Default interval for the un-normalized path powers.
pub const DEFAULT_POWER_RANGE: (f64, f64) = (0.4, 0.8);

/// Uniform linear array description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrayGeometry {
    antennas: usize,
    theta_max: f64,
    spacing_ratio: f64,
}

impl ArrayGeometry {
    /// `spacing_ratio` is the antenna spacing over the carrier wavelength.
    pub fn new(antennas: usize, theta_max: f64, spacing_ratio: f64) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::InvalidDimension("array needs at least one antenna".into()));
        }
        if !(theta_max > 0.0 && theta_max < PI / 2.0) {
            return Err(Error::Contract(format!(
                "theta_max must lie in (0, pi/2), got {theta_max}"
            )));
        }
        if !(spacing_ratio > 0.0 && spacing_ratio.is_finite()) {
            return Err(Error::Contract(format!(
                "spacing ratio must be positive, got {spacing_ratio}"
            )));
        }
        Ok(Self {
            antennas,
            theta_max,
            spacing_ratio,
        })
    }

    /// Spacing `1 / (2 sin theta_max)`: the aperture edge maps to a phase
    /// step of exactly pi between neighbouring antennas.
    pub fn with_aperture(antennas: usize, theta_max: f64) -> Result<Self> {
        Self::new(antennas, theta_max, 1.0 / (2.0 * theta_max.sin()))
    }

    /// 60 degree aperture with the matching spacing.
    pub fn standard(antennas: usize) -> Self {
        Self::with_aperture(antennas, DEFAULT_THETA_MAX).expect("valid default geometry")
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }
}

/// `[a(theta)]_m = exp(j 2 pi (d / lambda) m sin theta)`, `m = 0..M`.
pub fn steering_vector(theta: f64, geom: &ArrayGeometry) -> ComplexVector {
    let step = 2.0 * PI * geom.spacing_ratio * theta.sin();
    ComplexVector::from_fn(geom.antennas, |m, _| Complex64::from_polar(1.0, step * m as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    /// Angle of departure in radians.
    pub theta: f64,
    pub power: f64,
}

/// Multipath profile of one user. Powers are non-negative and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    paths: Vec<Path>,
}

impl PathSet {
    /// Takes paths with arbitrary non-negative powers and rescales the
    /// powers to sum to one.
    pub fn normalized(mut paths: Vec<Path>, geom: &ArrayGeometry) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidDimension("path set needs at least one path".into()));
        }
        for p in &paths {
            if !(p.power >= 0.0 && p.power.is_finite()) {
                return Err(Error::Contract(format!("path power {} is invalid", p.power)));
            }
            if !(p.theta.abs() <= geom.theta_max) {
                return Err(Error::Contract(format!(
                    "AoD {} outside +-{}",
                    p.theta, geom.theta_max
                )));
            }
        }
        let total: f64 = paths.iter().map(|p| p.power).sum();
        if total <= 0.0 {
            return Err(Error::Contract("path powers sum to zero".into()));
        }
        for p in &mut paths {
            p.power /= total;
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// `C = sum_l eta_l a(theta_l) a(theta_l)^H`.
pub fn synth_covariance(paths: &PathSet, geom: &ArrayGeometry) -> ComplexMatrix {
    let m = geom.antennas;
    let mut cov = ComplexMatrix::zeros(m, m);
    for p in paths.paths() {
        let a = steering_vector(p.theta, geom);
        cov += (&a * a.adjoint()) * Complex64::new(p.power, 0.0);
    }
    cov
}

/// Largest `|C(i,j) - C(i-j,0)|` over the matrix, i.e. distance from the
/// Hermitian Toeplitz matrix defined by the first column.
pub fn toeplitz_deviation(c: &ComplexMatrix) -> f64 {
    let n = c.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let reference = if i >= j { c[(i - j, 0)] } else { c[(j - i, 0)].conj() };
            worst = worst.max((c[(i, j)] - reference).norm());
        }
    }
    worst
}

/// Hermitian Toeplitz matrix with first column `col`.
pub fn toeplitz_from_first_column(col: &ComplexVector) -> ComplexMatrix {
    let n = col.len();
    ComplexMatrix::from_fn(n, n, |i, j| if i >= j { col[i - j] } else { col[j - i].conj() })
}

/// The K user covariances of one scheduling instance together with their
/// first columns `sigma = [c_1, ..., c_K]` (M x K).
#[derive(Clone, Debug)]
pub struct CovarianceScenario {
    covariances: Vec<ComplexMatrix>,
    sigma: ComplexMatrix,
    path_sets: Vec<PathSet>,
    factors: Vec<ComplexMatrix>,
}

impl CovarianceScenario {
    pub fn from_path_sets(path_sets: Vec<PathSet>, geom: &ArrayGeometry) -> Result<Self> {
        let covs = path_sets.iter().map(|p| synth_covariance(p, geom)).collect();
        let mut scn = Self::from_covariances(covs)?;
        scn.path_sets = path_sets;
        Ok(scn)
    }

    /// Builds a scenario from explicit covariances (Hermitian PSD, equal
    /// sizes). Square-root factors for channel sampling are computed once here.
    pub fn from_covariances(covariances: Vec<ComplexMatrix>) -> Result<Self> {
        let Some(first) = covariances.first() else {
            return Err(Error::InvalidDimension("scenario needs at least one user".into()));
        };
        let m = first.nrows();
        let mut factors = Vec::with_capacity(covariances.len());
        for c in &covariances {
            if c.nrows() != m || c.ncols() != m {
                return Err(Error::InvalidDimension(format!(
                    "covariance is {}x{}, expected {m}x{m}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            factors.push(psd_factor(c)?);
        }
        let sigma = ComplexMatrix::from_fn(m, covariances.len(), |i, k| covariances[k][(i, 0)]);
        Ok(Self {
            covariances,
            sigma,
            path_sets: Vec::new(),
            factors,
        })
    }

    /// Rebuilds the Toeplitz covariances from their first columns.
    pub fn from_sigma(sigma: &ComplexMatrix) -> Result<Self> {
        let covs = (0..sigma.ncols())
            .map(|k| toeplitz_from_first_column(&sigma.column(k).into_owned()))
            .collect();
        Self::from_covariances(covs)
    }

    pub fn antennas(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn users(&self) -> usize {
        self.covariances.len()
    }

    pub fn covariances(&self) -> &[ComplexMatrix] {
        &self.covariances
    }

    pub fn covariance(&self, k: usize) -> &ComplexMatrix {
        &self.covariances[k]
    }

    pub fn sigma(&self) -> &ComplexMatrix {
        &self.sigma
    }

    /// Empty for scenarios not built from path sets.
    pub fn path_sets(&self) -> &[PathSet] {
        &self.path_sets
    }

    /// `S_k` with `S_k S_k^H = C_k`.
    pub fn factor(&self, k: usize) -> &ComplexMatrix {
        &self.factors[k]
    }
}

/// Draws one scenario from D(L): per user, L AoDs uniform on
/// `(-theta_max, theta_max)` and L powers uniform on `power_range`, the
/// powers then rescaled to sum to one.
pub fn sample_scenario(
    paths: usize,
    users: usize,
    geom: &ArrayGeometry,
    power_range: (f64, f64),
    rng: &mut RngStream,
) -> Result<CovarianceScenario> {
    if paths == 0 || users == 0 {
        return Err(Error::InvalidDimension("need L >= 1 and K >= 1".into()));
    }
    let (lo, hi) = power_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Contract(format!("bad power range [{lo}, {hi}]")));
    }
    let theta_max = geom.theta_max;
    let mut sets = Vec::with_capacity(users);
    for _ in 0..users {
        let raw: Vec<Path> = (0..paths)
            .map(|_| {
                let theta = rng.random_range(-theta_max..theta_max);
                let power = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                Path { theta, power }
            })
            .collect();
        sets.push(PathSet::normalized(raw, geom)?);
    }
    CovarianceScenario::from_path_sets(sets, geom)
}

/// `gamma = Re diag(F^H C F)`, negatives from rounding clamped to zero.
pub fn beam_spectrum(c: &ComplexMatrix, dft: &ComplexMatrix) -> RealVector {
    let rotated = dft.adjoint() * c * dft;
    RealVector::from_fn(c.nrows(), |i, _| rotated[(i, i)].re.max(0.0))
}

/// Instantaneous channels, column k is user k's `h_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
}

impl ChannelRealization {
    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn users(&self) -> usize {
        self.h.ncols()
    }
}

/// `h_k ~ CN(0, C_k)` for every user, drawn in user order.
pub fn sample_channels(scn: &CovarianceScenario, rng: &mut RngStream) -> ChannelRealization {
    let mut h = ComplexMatrix::zeros(scn.antennas(), scn.users());
    for k in 0..scn.users() {
        h.set_column(k, &sample_cn(scn.factor(k), rng));
    }
    ChannelRealization { h }
}

/// Hermitian/trace/Toeplitz/first-column checks on a scenario; returns the
/// worst violation of each as (asymmetry, |trace - M| / M, toeplitz).
pub fn scenario_defects(scn: &CovarianceScenario) -> (f64, f64, f64) {
    let m = scn.antennas() as f64;
    let mut out = (0.0_f64, 0.0_f64, 0.0_f64);
    for c in scn.covariances() {
        out.0 = out.0.max(hermitian_asymmetry(c));
        out.1 = out.1.max((c.trace().re - m).abs() / m);
        out.2 = out.2.max(toeplitz_deviation(c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dft_matrix;

    fn geom(m: usize) -> ArrayGeometry {
        ArrayGeometry::standard(m)
    }

    #[test]
    fn geometry_validation() {
        assert!(ArrayGeometry::new(0, 1.0, 0.5).is_err());
        assert!(ArrayGeometry::new(4, PI / 2.0, 0.5).is_err());
        assert!(ArrayGeometry::new(4, 0.5, 0.0).is_err());
        let g = geom(8);
        assert!((g.spacing_ratio() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn steering_edge_cases() {
        let g = geom(8);
        let a0 = steering_vector(0.0, &g);
        assert!(a0.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let edge = steering_vector(g.theta_max(), &g);
        for (m, z) in edge.iter().enumerate() {
            let expect = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z - Complex64::new(expect, 0.0)).norm() < 1e-12, "m={m} {z}");
        }
        let a = steering_vector(-0.37, &g);
        assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        assert_eq!(a[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn single_path_is_rank_one() {
        let g = geom(8);
        let ps = PathSet::normalized(vec![Path { theta: 0.2, power: 3.0 }], &g).unwrap();
        let c = synth_covariance(&ps, &g);
        let a = steering_vector(0.2, &g);
        assert!((&c - &a * a.adjoint()).norm() < 1e-12);
        assert!((c.trace().re - 8.0).abs() < 1e-12);
        assert_eq!(psd_factor(&c).unwrap().ncols(), 1);
    }

    #[test]
    fn two_orthogonal_paths_split_eigenvalues() {
        // sin(theta) = 1/(M d) puts the second steering vector on the next DFT bin,
        // orthogonal to the broadside one.
        let g = geom(8);
        let theta2 = (1.0 / (8.0 * g.spacing_ratio())).asin();
        let ps = PathSet::normalized(
            vec![Path { theta: 0.0, power: 1.0 }, Path { theta: theta2, power: 1.0 }],
            &g,
        )
        .unwrap();
        let c = synth_covariance(&ps, &g);
        // oracle: eigendecomposition of the explicit two-term sum
        let mut eig: Vec<f64> = c.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        assert!((eig[0] - 4.0).abs() < 1e-10 && (eig[1] - 4.0).abs() < 1e-10);
        assert!(eig[2..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn sampled_scenarios_satisfy_invariants() {
        let g = geom(16);
        let mut rng = RngStream::new(8, 0);
        for _ in 0..20 {
            let scn = sample_scenario(3, 4, &g, DEFAULT_POWER_RANGE, &mut rng).unwrap();
            let (asym, trace, toep) = scenario_defects(&scn);
            assert!(asym <= 1e-10 && trace <= 1e-8 && toep <= 1e-10);
            for k in 0..4 {
                assert_eq!(scn.sigma().column(k), scn.covariance(k).column(0));
                let min = scn.covariance(k).clone().symmetric_eigen().eigenvalues.min();
                assert!(min >= -1e-8 * 16.0);
            }
        }
    }

    #[test]
    fn raw_powers_within_range() {
        // re-derive the raw powers: normalized powers are raw / sum, so
        // ratios between paths are ratios of raw draws in [0.4, 0.8]
        let g = geom(8);
        let mut rng = RngStream::new(21, 0);
        for _ in 0..200 {
            let scn = sample_scenario(4, 2, &g, DEFAULT_POWER_RANGE, &mut rng).unwrap();
            for set in scn.path_sets() {
                let p: Vec<f64> = set.paths().iter().map(|p| p.power).collect();
                let ratio = p.iter().cloned().fold(0.0, f64::max) / p.iter().cloned().fold(1.0, f64::min);
                assert!(ratio <= 2.0 + 1e-12);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scenario_sampling_is_deterministic_and_low_rank() {
        let g = geom(16);
        let a = sample_scenario(2, 6, &g, DEFAULT_POWER_RANGE, &mut RngStream::new(4, 4)).unwrap();
        let b = sample_scenario(2, 6, &g, DEFAULT_POWER_RANGE, &mut RngStream::new(4, 4)).unwrap();
        assert_eq!(a.sigma(), b.sigma());
        for k in 0..6 {
            assert!(a.factor(k).ncols() <= 2);
        }
    }

    #[test]
    fn beam_spectrum_cases() {
        let f = dft_matrix(8).unwrap();
        let ones = beam_spectrum(&ComplexMatrix::identity(8, 8), &f);
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let gains = [0.0, 1.5, 0.2, 3.0, 0.0, 0.7, 2.0, 0.6];
        let d = ComplexMatrix::from_diagonal(&ComplexVector::from_fn(8, |i, _| Complex64::new(gains[i], 0.0)));
        let circ = &f * d * f.adjoint();
        let g = beam_spectrum(&circ, &f);
        for i in 0..8 {
            assert!((g[i] - gains[i]).abs() <= 1e-10);
        }

        let geom = geom(8);
        let scn = sample_scenario(2, 1, &geom, DEFAULT_POWER_RANGE, &mut RngStream::new(3, 3)).unwrap();
        let c = scn.covariance(0);
        let gamma = beam_spectrum(c, &f);
        assert!((gamma.sum() - 8.0).abs() < 1e-8);
        // oracle: direct bilinear form f_m^H C f_m per beam
        for m in 0..8 {
            let fm = f.column(m);
            let direct = (fm.adjoint() * c * fm)[(0, 0)].re;
            assert!((gamma[m] - direct.max(0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_covariance_gives_zero_channel() {
        let scn = CovarianceScenario::from_covariances(vec![ComplexMatrix::zeros(4, 4), ComplexMatrix::identity(4, 4)]).unwrap();
        let h = sample_channels(&scn, &mut RngStream::new(0, 0));
        assert!(h.h.column(0).iter().all(|z| z.norm() == 0.0));
        assert!(h.h.column(1).iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn from_sigma_recovers_covariances() {
        let g = geom(8);
        let scn = sample_scenario(3, 2, &g, DEFAULT_POWER_RANGE, &mut RngStream::new(6, 1)).unwrap();
        let back = CovarianceScenario::from_sigma(scn.sigma()).unwrap();
        for k in 0..2 {
            assert!((back.covariance(k) - scn.covariance(k)).norm() < 1e-10);
        }
    }
}
