//! Feedback-budget sweep driven from a config file (default
//! configs/quick.toml); prints the CSV.

use prebeam::experiments::{run_sweep, sweep_csv, ExperimentConfig};

fn main() -> prebeam::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/quick.toml").into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let report = run_sweep(&cfg)?;
    print!("{}", sweep_csv(&cfg, &report));
    Ok(())
}
