//! Short Adam training run with the backprop engine; prints the validation curve and writes the
//! checkpoint to the path given as the first argument (default net.txt).

use prebeam::channel::{ArrayGeometry, DEFAULT_POWER_RANGE};
use prebeam::evaluation::LinkConfig;
use prebeam::selector::{save_checkpoint, train_dnn, GradientEngine, ScenarioDistribution, TrainConfig};

fn main() -> prebeam::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "net.txt".into());
    let dist = ScenarioDistribution { geometry: ArrayGeometry::standard(16), paths: 8, users: 3, power_range: DEFAULT_POWER_RANGE };
    let link = LinkConfig::from_bits(16, 4, 20.0, 1.0, 4)?;
    let cfg = TrainConfig {
        optimizer: GradientEngine::AdamBackprop,
        n_iterations: 400,
        batch_size: 16,
        learning_rate: 1e-2,
        spsa_c: 0.05,
        hidden: [16, 16],
        n_channels: 4,
        eval_interval: 50,
        n_validation: 64,
        ..TrainConfig::default()
    };
    let out = train_dnn(&dist, &cfg, &link)?;
    println!("lambda-one on validation: {:.3}", out.lambda_one_validation);
    for p in &out.curve {
        println!("iter {:>4}  validation {:.3}  best {:.3}", p.iteration, p.validation_sum_rate, p.best_so_far);
    }
    save_checkpoint(&out.params, path.as_ref())?;
    println!("saved {path}");
    Ok(())
}
