//! Invariant suite for a configured system.

use num_complex::Complex64;
use rand::Rng;

use super::{validate_streams, ExperimentConfig};
use crate::air::{analog_feedback, build_pilot_matrix, dl_pilot_rx, ul_feedback_rx, LmmseEstimator};
use crate::channel::sample_channels;
use crate::error::Result;
use crate::numerics::{dft_matrix, ComplexMatrix};
use crate::precoding::{pre_beamformer, zf_effective, zf_effective_inner, BeamSelection};

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    /// Largest violation observed.
    pub worst: f64,
    pub tolerance: f64,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Checks DFT unitarity, covariance traces, pilot and feedback power,
/// precoder power and effective-channel inversion on `n_scenarios` random
/// scenarios with random beam selections, one episode each, at every
/// configured feedback budget.
pub fn run_invariant_suite(cfg: &ExperimentConfig, n_scenarios: usize) -> Result<Vec<InvariantCheck>> {
    let m = cfg.system.antennas;
    let users = cfg.system.users;
    let beta = cfg.system.beta;
    let p_dl = cfg.system.p_dl;
    let dft = dft_matrix(m)?;
    let unitarity = max_abs(&(dft.adjoint() * &dft - ComplexMatrix::identity(m, m)));

    let root = validate_streams(cfg.system.seed);
    let scenarios = cfg.distribution()?.sample_many(n_scenarios, &mut root.derive(0))?;
    let mut trace = 0.0f64;
    let mut pilot = 0.0f64;
    let mut feedback = 0.0f64;
    let mut power = 0.0f64;
    let mut inversion = 0.0f64;
    for (bi, &b_bits) in cfg.system.b_bits.iter().enumerate() {
        let link = cfg.link(b_bits)?;
        let p_ul = link.feedback.p_ul;
        for (i, scn) in scenarios.iter().enumerate() {
            if bi == 0 {
                for c in scn.covariances() {
                    trace = trace.max((c.trace().re - m as f64).abs());
                }
            }
            let mut rng = root.derive_path(&[1, bi as u64, i as u64]);
            let lambda: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let b = pre_beamformer(&BeamSelection::clamped(lambda), &dft)?;
            let x_p = build_pilot_matrix(&link.pilot, &b)?;
            for row in x_p.row_iter() {
                pilot = pilot.max((row.norm_squared() - p_dl).abs() / p_dl);
            }
            let channels = sample_channels(scn, &mut rng);
            let y_p = dl_pilot_rx(&x_p, &channels, link.noise, &mut rng);
            let mut g_hat = ComplexMatrix::zeros(m, users);
            for k in 0..users {
                let (x_fb, rho) = analog_feedback(&y_p.column(k).into_owned(), beta, p_ul)?;
                if p_ul > 0.0 {
                    let target = beta as f64 * p_ul;
                    feedback = feedback.max((x_fb.norm_squared() - target).abs() / target);
                }
                let y_fb = ul_feedback_rx(&x_fb, link.noise, &mut rng);
                if rho == 0.0 {
                    continue;
                }
                let est = LmmseEstimator::new(rho, &x_p, &b, scn.covariance(k))?;
                g_hat.set_column(k, &est.estimate(&y_fb));
            }
            if p_ul == 0.0 {
                // no feedback, nothing to invert
                continue;
            }
            let pre = zf_effective(&g_hat, &b, p_dl)?;
            power = power.max((pre.power() - p_dl).abs() / p_dl);
            let inner = zf_effective_inner(&g_hat, pre.alpha)?;
            let sqrt_alpha = pre.alpha.sqrt();
            let target = ComplexMatrix::identity(users, users) * Complex64::new(sqrt_alpha, 0.0);
            inversion = inversion.max(max_abs(&(inner * &g_hat - target)) / sqrt_alpha);
        }
    }
    Ok(vec![
        InvariantCheck { name: "dft_unitarity", worst: unitarity, tolerance: 1e-10 },
        InvariantCheck { name: "covariance_trace", worst: trace, tolerance: 1e-8 },
        InvariantCheck { name: "pilot_row_power", worst: pilot, tolerance: 1e-9 },
        InvariantCheck { name: "feedback_power", worst: feedback, tolerance: 1e-9 },
        InvariantCheck { name: "precoder_power", worst: power, tolerance: 1e-9 },
        InvariantCheck { name: "zf_inversion", worst: inversion, tolerance: 1e-8 },
    ])
}
