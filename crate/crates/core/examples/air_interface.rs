//! Pilot design, analog feedback and LMMSE estimation of one user's
//! effective channel, with a selection that mutes half the beams.

use prebeam::air::{analog_feedback, build_pilot_matrix, dl_pilot_rx, ul_feedback_rx, FeedbackConfig, LmmseEstimator, NoiseMode, PilotConfig};
use prebeam::channel::{sample_channels, sample_scenario, ArrayGeometry, DEFAULT_POWER_RANGE};
use prebeam::numerics::{dft_matrix, ComplexVector, RngStream};
use prebeam::precoding::{pre_beamformer, BeamSelection};

fn main() -> prebeam::Result<()> {
    let (m, beta, p_dl, bits) = (8, 2, 20.0, 6.0);
    let geom = ArrayGeometry::standard(m);
    let mut rng = RngStream::new(3, 0);
    let scn = sample_scenario(2, 1, &geom, DEFAULT_POWER_RANGE, &mut rng)?;

    let selection = BeamSelection::new(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0])?;
    let b = pre_beamformer(&selection, &dft_matrix(m)?)?;
    let x_p = build_pilot_matrix(&PilotConfig::generate(beta, m, p_dl, 1)?, &b)?;
    let fb = FeedbackConfig::from_bits(bits, beta);
    println!("B_bits = {bits} over beta = {beta} symbols -> P_ul = {:.3}", fb.p_ul);

    let ch = sample_channels(&scn, &mut rng);
    let y_p: ComplexVector = dl_pilot_rx(&x_p, &ch, NoiseMode::On, &mut rng).column(0).into_owned();
    let (x_fb, rho) = analog_feedback(&y_p, beta, fb.p_ul)?;
    println!("feedback energy {:.3} (target {:.3}), rho = {rho:.4}", x_fb.norm_squared(), beta as f64 * fb.p_ul);
    let y_fb = ul_feedback_rx(&x_fb, NoiseMode::On, &mut rng);

    let est = LmmseEstimator::new(rho, &x_p, &b, scn.covariance(0))?;
    let g = &b * ch.h.column(0);
    let g_hat = est.estimate(&y_fb);
    println!("|g|^2 = {:.3}, |g - g_hat|^2 = {:.3}, expected error {:.3}", g.norm_squared(), (g - g_hat).norm_squared(), est.error_cov.trace().re);
    Ok(())
}
