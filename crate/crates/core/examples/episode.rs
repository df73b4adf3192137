//! One channel draw through the full link for lambda = 1, next to the
//! perfect-CSI baselines on the same channel.

use prebeam::channel::{sample_scenario, ArrayGeometry, DEFAULT_POWER_RANGE};
use prebeam::evaluation::{run_baseline_episode, run_episode, Baseline, LinkConfig};
use prebeam::numerics::RngStream;
use prebeam::precoding::BeamSelection;

fn main() -> prebeam::Result<()> {
    let geom = ArrayGeometry::standard(16);
    let scn = sample_scenario(8, 3, &geom, DEFAULT_POWER_RANGE, &mut RngStream::new(1, 0))?;
    let episode = RngStream::new(1, 1);
    for bits in [1.0, 12.0] {
        let link = LinkConfig::from_bits(16, 4, 20.0, bits, 9)?;
        let ep = run_episode(&scn, &BeamSelection::ones(16), &link, &episode)?;
        let rates: Vec<String> = ep.report.per_user_rates.iter().map(|r| format!("{r:.2}")).collect();
        println!("B_bits {bits:>4}: sum-rate {:.3} per user [{}]", ep.report.sum_rate, rates.join(", "));
    }
    for b in [Baseline::ZfPerfect, Baseline::Mrt] {
        println!("{b:?}: sum-rate {:.3}", run_baseline_episode(&scn, b, 20.0, &episode)?.sum_rate);
    }
    Ok(())
}
