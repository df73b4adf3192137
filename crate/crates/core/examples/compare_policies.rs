//! Paired comparison of the per-scenario oracle selection against
//! lambda = 1 on a small rich-scattering test set.

use prebeam::channel::{ArrayGeometry, DEFAULT_POWER_RANGE};
use prebeam::evaluation::{evaluate_policy, LambdaOne, LinkConfig, PairedComparison, Z_95};
use prebeam::experiments::OraclePolicy;
use prebeam::numerics::RngStream;
use prebeam::selector::{OracleConfig, ScenarioDistribution};

fn main() -> prebeam::Result<()> {
    let dist = ScenarioDistribution { geometry: ArrayGeometry::standard(16), paths: 8, users: 3, power_range: DEFAULT_POWER_RANGE };
    let scenarios = dist.sample_many(30, &mut RngStream::new(5, 0))?;
    let link = LinkConfig::from_bits(16, 4, 20.0, 1.0, 2)?;
    let oracle = OraclePolicy { link: &link, config: OracleConfig::default(), streams: RngStream::new(5, 1) };

    // both policies see the same channels and noise
    let streams = RngStream::new(5, 2);
    let a = evaluate_policy(&scenarios, &oracle, &link, 10, &streams)?;
    let b = evaluate_policy(&scenarios, &LambdaOne, &link, 10, &streams)?;
    let c = PairedComparison::new(&a, &b);
    println!("oracle     {:.3} +- {:.3}", a.mean, a.std_error);
    println!("lambda-one {:.3} +- {:.3}", b.mean, b.std_error);
    println!("paired difference {:.3} +- {:.3}, 95% lower bound {:.3}", c.mean_diff, c.std_error, c.lower_bound(Z_95));
    Ok(())
}
