use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use prebeam::experiments::{self, ExperimentConfig, Noise};
use prebeam::Error;

/// Link-level experiments for covariance-aware DFT beam selection with
/// analog feedback.
#[derive(Parser)]
#[command(name = "prebeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML, or a CSV written by this tool).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `system.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides `system.noise`.
    #[arg(long, global = true, value_enum)]
    noise: Option<NoiseArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured policies across the feedback budgets.
    Sweep,
    /// Train the beam-selection network.
    Train,
    /// Dump beam selections for fresh scenarios, one row each.
    Heatmap {
        /// Number of scenarios (default: `eval.heatmap_realizations`).
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Run the invariant suite on the configured system.
    Validate {
        #[arg(long, default_value_t = 20)]
        scenarios: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    On,
    Off,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Checkpoint(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.system.seed = seed;
    }
    if let Some(dir) = &cli.output {
        cfg.output.dir = dir.clone();
    }
    if let Some(n) = cli.noise {
        cfg.system.noise = match n {
            NoiseArg::On => Noise::On,
            NoiseArg::Off => Noise::Off,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> Result<u8, Error> {
    let dir = &cfg.output.dir;
    let written = match &cli.command {
        Command::Sweep => {
            let report = experiments::run_sweep(cfg)?;
            for r in &report.rows {
                println!("{:<24} B={:<6} {:.4} +- {:.4}", r.policy, r.b_bits, r.estimate.mean, r.estimate.std_error);
            }
            experiments::write_sweep(cfg, &report, dir)?
        }
        Command::Train => {
            let outcome = experiments::run_training(cfg)?;
            if let Some(last) = outcome.curve.last() {
                println!(
                    "iteration {}: validation {:.4} (lambda-one {:.4})",
                    last.iteration, last.validation_sum_rate, outcome.lambda_one_validation
                );
            }
            experiments::write_training(cfg, &outcome, dir)?
        }
        Command::Heatmap { realizations } => {
            let n = realizations.unwrap_or(cfg.eval.heatmap_realizations);
            if n == 0 {
                return Err(Error::Config("--realizations must be >= 1".into()));
            }
            let rows = experiments::dump_lambda_heatmap(cfg, n)?;
            vec![experiments::write_heatmap(cfg, &rows, dir)?]
        }
        Command::Validate { scenarios } => {
            let checks = experiments::run_invariant_suite(cfg, (*scenarios).max(1))?;
            let path = experiments::write_validate(cfg, &checks, dir)?;
            for c in &checks {
                let verdict = if c.passed() { "ok  " } else { "FAIL" };
                println!("{verdict} {:<18} worst {:.3e} (tol {:.0e})", c.name, c.worst, c.tolerance);
            }
            println!("wrote {}", path.display());
            return Ok(if checks.iter().all(|c| c.passed()) { 0 } else { EXIT_INVARIANT });
        }
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("prebeam: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("prebeam: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match pool.install(|| run(&cli, &cfg)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("prebeam: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
