//! Oracle beam selections for sparse and rich scattering, drawn as text.

use prebeam::experiments::{dump_lambda_heatmap, ExperimentConfig};

fn main() -> prebeam::Result<()> {
    for paths in [2, 8] {
        let cfg = ExperimentConfig::from_str(&format!(
            "[system]\nantennas = 16\nusers = 3\nbeta = 4\np_dl = 20.0\npaths = {paths}\nb_bits = [12.0]\nseed = 3\n"
        ))?;
        let rows = dump_lambda_heatmap(&cfg, 12)?;
        println!("L = {paths}");
        for r in &rows {
            let line: String = r.iter().map(|&v| if v > 0.75 { '#' } else if v > 0.25 { '+' } else { '.' }).collect();
            println!("  {line}  mean {:.2}", r.iter().sum::<f64>() / r.len() as f64);
        }
    }
    Ok(())
}
