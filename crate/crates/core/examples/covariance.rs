//! Draws a multipath scenario and shows where each user's energy sits in
//! the DFT beam domain.

use prebeam::channel::{beam_spectrum, sample_scenario, steering_vector, ArrayGeometry, DEFAULT_POWER_RANGE};
use prebeam::numerics::{dft_matrix, RngStream};

fn main() -> prebeam::Result<()> {
    let geom = ArrayGeometry::standard(16);
    println!("M = {}, aperture +-{:.0} deg, spacing {:.3} wavelengths", geom.antennas(), geom.theta_max().to_degrees(), geom.spacing_ratio());

    let a = steering_vector(0.3, &geom);
    println!("|a(0.3)|^2 = {:.3}", a.norm_squared());

    let mut rng = RngStream::new(7, 0);
    let scn = sample_scenario(3, 2, &geom, DEFAULT_POWER_RANGE, &mut rng)?;
    let f = dft_matrix(16)?;
    for k in 0..scn.users() {
        let paths: Vec<String> = scn.path_sets()[k]
            .paths()
            .iter()
            .map(|p| format!("{:+.1} deg @ {:.2}", p.theta.to_degrees(), p.power))
            .collect();
        println!("user {k}: paths {}", paths.join(", "));
        println!("  trace C = {:.6}", scn.covariance(k).trace().re);
        let spec = beam_spectrum(scn.covariance(k), &f);
        let bars: String = spec.iter().map(|&e| if e > 1.0 { '#' } else if e > 0.1 { '+' } else { '.' }).collect();
        println!("  beam energy  {bars}");
    }
    Ok(())
}
