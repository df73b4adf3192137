//! Downlink common training, analog feedback over an orthogonal AWGN uplink
//! and LMMSE estimation of the effective channels at the base station.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::numerics::{cn_matrix, cn_vector, hermitian_solve, Complex64, ComplexMatrix, ComplexVector, RngStream};

/// Squared pilot observations below this are treated as empty.
pub const MIN_OBSERVATION_ENERGY: f64 = 1e-30;

/// Whether receiver noise is drawn. `Off` exists for exact test checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseMode {
    #[default]
    On,
    Off,
}

/// Downlink pilot design: length `beta`, power `p_dl` and the fixed
/// `beta x M` mixing matrix `W` in `X = W B`.
#[derive(Clone, Debug)]
pub struct PilotConfig {
    pub beta: usize,
    pub p_dl: f64,
    pub w: ComplexMatrix,
    pub w_seed: u64,
}

impl PilotConfig {
    /// Draws `W` with i.i.d. CN(0, 1) entries. If the draw is numerically
    /// rank deficient the seed is bumped and the draw repeated.
    pub fn generate(beta: usize, antennas: usize, p_dl: f64, w_seed: u64) -> Result<Self> {
        if beta == 0 || antennas == 0 {
            return Err(Error::InvalidDimension("pilot length and antenna count must be >= 1".into()));
        }
        if !(p_dl > 0.0) {
            return Err(Error::Contract(format!("P_dl must be positive, got {p_dl}")));
        }
        let mut seed = w_seed;
        loop {
            let w = cn_matrix(beta, antennas, &mut RngStream::new(seed, 0));
            if numerical_rank(&w) == beta.min(antennas) {
                return Ok(Self { beta, p_dl, w, w_seed: seed });
            }
            seed = seed.wrapping_add(1);
        }
    }

    pub fn with_matrix(w: ComplexMatrix, p_dl: f64) -> Result<Self> {
        if numerical_rank(&w) != w.nrows().min(w.ncols()) {
            return Err(Error::Contract("pilot mixing matrix must have full rank".into()));
        }
        Ok(Self { beta: w.nrows(), p_dl, w, w_seed: 0 })
    }

    pub fn antennas(&self) -> usize {
        self.w.ncols()
    }
}

fn numerical_rank(a: &ComplexMatrix) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let tol = max * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol).count()
}

/// `P_ul = 2^(bits / beta) - 1`: the uplink power at which `beta` analog
/// symbols carry `bits` bits of AWGN capacity.
pub fn ul_power_from_bits(bits: f64, beta: usize) -> f64 {
    (bits / beta as f64).exp2() - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeedbackConfig {
    pub b_bits: f64,
    pub p_ul: f64,
}

impl FeedbackConfig {
    pub fn from_bits(b_bits: f64, beta: usize) -> Self {
        Self { b_bits, p_ul: ul_power_from_bits(b_bits, beta) }
    }
}

/// `X = W B` with every nonzero row rescaled to squared norm `p_dl`.
pub fn build_pilot_matrix(cfg: &PilotConfig, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if cfg.w.ncols() != b.nrows() || !b.is_square() {
        return Err(Error::InvalidDimension(format!(
            "W is {}x{}, pre-beamformer {}x{}",
            cfg.w.nrows(),
            cfg.w.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut x = &cfg.w * b;
    for mut row in x.row_iter_mut() {
        let energy = row.norm_squared();
        if energy > 1e-300 {
            row.scale_mut((cfg.p_dl / energy).sqrt());
        } else {
            row.fill(Complex64::new(0.0, 0.0));
        }
    }
    Ok(x)
}

/// `Y = X H + Z` with `Z` i.i.d. CN(0, 1); column k is user k's observation.
pub fn dl_pilot_rx(
    x_p: &ComplexMatrix,
    channels: &ChannelRealization,
    noise: NoiseMode,
    rng: &mut RngStream,
) -> ComplexMatrix {
    let mut y = x_p * &channels.h;
    if noise == NoiseMode::On {
        y += cn_matrix(y.nrows(), y.ncols(), rng);
    }
    y
}

/// Power-normalized analog feedback: `x = sqrt(rho) y` with
/// `rho = beta P_ul / |y|^2`, so `|x|^2 = beta P_ul` exactly.
pub fn analog_feedback(y_p: &ComplexVector, beta: usize, p_ul: f64) -> Result<(ComplexVector, f64)> {
    let energy = y_p.norm_squared();
    if energy < MIN_OBSERVATION_ENERGY {
        return Err(Error::DegenerateObservation(energy));
    }
    let rho = beta as f64 * p_ul / energy;
    Ok((y_p * Complex64::new(rho.sqrt(), 0.0), rho))
}

/// Orthogonal AWGN uplink: `y = x + z`, `z ~ CN(0, I)`.
pub fn ul_feedback_rx(x_fb: &ComplexVector, noise: NoiseMode, rng: &mut RngStream) -> ComplexVector {
    match noise {
        NoiseMode::On => x_fb + cn_vector(x_fb.len(), rng),
        NoiseMode::Off => x_fb.clone(),
    }
}

/// LMMSE estimator of `g = B h` from `y = sqrt(rho) (X h + z_p) + z_fb`,
/// with `h ~ CN(0, C)` and `rho` treated as a known constant.
///
/// `C_gy = sqrt(rho) B C X^H`, `C_yy = rho X C X^H + (1 + rho) I`.
#[derive(Clone, Debug)]
pub struct LmmseEstimator {
    /// `C_gy C_yy^{-1}`, M x beta.
    pub gain: ComplexMatrix,
    /// `B C B^H - C_gy C_yy^{-1} C_gy^H`.
    pub error_cov: ComplexMatrix,
}

impl LmmseEstimator {
    pub fn new(rho: f64, x_p: &ComplexMatrix, b: &ComplexMatrix, cov: &ComplexMatrix) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::Contract(format!("feedback gain must be positive, got {rho}")));
        }
        let m = cov.nrows();
        if x_p.ncols() != m || b.nrows() != m || b.ncols() != m {
            return Err(Error::InvalidDimension("estimator inputs disagree on M".into()));
        }
        let beta = x_p.nrows();
        let cx = cov * x_p.adjoint(); // C X^H, M x beta
        let c_gy = (b * &cx) * Complex64::new(rho.sqrt(), 0.0);
        let mut c_yy = (x_p * &cx) * Complex64::new(rho, 0.0);
        for i in 0..beta {
            c_yy[(i, i)] += Complex64::new(1.0 + rho, 0.0);
        }
        // C_yy^{-1} C_gy^H, then take the adjoint to get C_gy C_yy^{-1}
        let gain = hermitian_solve(&c_yy, &c_gy.adjoint())?.adjoint();
        let error_cov = b * cov * b.adjoint() - &gain * c_gy.adjoint();
        Ok(Self { gain, error_cov })
    }

    pub fn estimate(&self, y_fb: &ComplexVector) -> ComplexVector {
        &self.gain * y_fb
    }
}

/// One-shot form of [`LmmseEstimator`]: returns `(g_hat, error_cov)`.
pub fn mmse_effective_estimate(
    y_fb: &ComplexVector,
    rho: f64,
    x_p: &ComplexMatrix,
    b: &ComplexMatrix,
    cov: &ComplexMatrix,
) -> Result<(ComplexVector, ComplexMatrix)> {
    let est = LmmseEstimator::new(rho, x_p, b, cov)?;
    Ok((est.estimate(y_fb), est.error_cov))
}

/// Everything exchanged over the air in one episode.
#[derive(Clone, Debug)]
pub struct AirFrame {
    pub x_p: ComplexMatrix,
    pub y_p: ComplexMatrix,
    /// `None` for users whose pilot observation was degenerate.
    pub rho: Vec<Option<f64>>,
    pub y_fb: ComplexMatrix,
}

#[derive(Clone, Debug)]
pub struct EffectiveEstimate {
    pub g_hat: ComplexMatrix,
    pub error_cov: Vec<ComplexMatrix>,
}
