//! Experiment drivers behind the command-line tool: feedback-budget sweeps,
//! training runs, beam-selection heat maps and the invariant suite.
//!
//! Every CSV starts with a schema line and the resolved configuration as
//! `# config: ` comments, so the file itself can be passed back as
//! `--config` to regenerate it.

mod config;
mod validate;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::{EvalSection, ExperimentConfig, Noise, OutputSection, PolicySpec, SystemSection, TrainSection};
pub use validate::{run_invariant_suite, InvariantCheck};

use crate::air::ul_power_from_bits;
use crate::channel::{write_scenario_set, ScenarioSetHeader};
use crate::channel::CovarianceScenario;
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_scheme, Baseline, LambdaOne, LinkConfig, Policy, PolicyEstimate, Scheme, ScenarioRow,
    SCENARIO_CSV_HEADER,
};
use crate::numerics::RngStream;
use crate::precoding::BeamSelection;
use crate::selector::{
    load_checkpoint_for, optimize_lambda_instance, save_checkpoint, train_dnn, MlpParams, MlpPolicy, OracleConfig,
    TrainOutcome,
};

pub const CONFIG_PREFIX: &str = "# config: ";
pub const SWEEP_SCHEMA: &str = "# prebeam sweep v1";
pub const CURVE_SCHEMA: &str = "# prebeam training-curve v1";
pub const HEATMAP_SCHEMA: &str = "# prebeam heatmap v1";
pub const VALIDATE_SCHEMA: &str = "# prebeam validate v1";
pub const SWEEP_HEADER: &str = "policy,B_bits,P_ul,L,mean_sum_rate,std_error,n_episodes";

// stream labels under the experiment root
const TEST_SET: u64 = 1;
const TEST_EPISODES: u64 = 2;
const ORACLE_STREAMS: u64 = 3;
const HEATMAP_SET: u64 = 4;
const HEATMAP_ORACLE: u64 = 5;
const VALIDATE_STREAMS: u64 = 6;

/// Root of all sweep/heatmap streams. Training uses stream 0 of the same
/// seed, so training and test data never share a generator.
pub fn experiment_root(seed: u64) -> RngStream {
    RngStream::new(seed, 1)
}

fn header_block(schema: &str, cfg: &ExperimentConfig) -> String {
    let mut s = format!("{schema}\n");
    for line in cfg.to_toml().lines() {
        s.push_str(CONFIG_PREFIX);
        s.push_str(line);
        s.push('\n');
    }
    s
}

/// Frozen test set shared by every policy of a sweep.
pub fn test_set(cfg: &ExperimentConfig) -> Result<Vec<CovarianceScenario>> {
    let dist = cfg.distribution()?;
    dist.sample_many(cfg.eval.n_test_cov, &mut experiment_root(cfg.system.seed).derive(TEST_SET))
}

/// Per-instance oracle as a policy; scenario `i` searches on its own
/// streams, disjoint from the evaluation streams.
pub struct OraclePolicy<'a> {
    pub link: &'a LinkConfig,
    pub config: OracleConfig,
    pub streams: RngStream,
}

impl Policy for OraclePolicy<'_> {
    fn select(&self, index: usize, scenario: &CovarianceScenario) -> Result<BeamSelection> {
        optimize_lambda_instance(scenario, self.link, &self.config, &self.streams.derive(index as u64))
            .map(|o| o.selection)
    }
}

enum Resolved {
    Policy(Box<dyn Policy>),
    Oracle,
    Baseline(Baseline),
}

fn resolve(spec: &PolicySpec, cfg: &ExperimentConfig) -> Result<Resolved> {
    Ok(match spec {
        PolicySpec::LambdaOne => Resolved::Policy(Box::new(LambdaOne)),
        PolicySpec::Oracle => Resolved::Oracle,
        PolicySpec::ZfPerfect => Resolved::Baseline(Baseline::ZfPerfect),
        PolicySpec::Mrt => Resolved::Baseline(Baseline::Mrt),
        PolicySpec::Dnn(path) => {
            let params = load_checkpoint_for(path, cfg.system.antennas, cfg.system.users)?;
            Resolved::Policy(Box::new(OwnedMlp(params)))
        }
    })
}

struct OwnedMlp(MlpParams);

impl Policy for OwnedMlp {
    fn select(&self, index: usize, scenario: &CovarianceScenario) -> Result<BeamSelection> {
        MlpPolicy(&self.0).select(index, scenario)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub policy: String,
    pub b_bits: f64,
    pub p_ul: f64,
    pub paths: usize,
    pub estimate: PolicyEstimate,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub test_set: Vec<CovarianceScenario>,
}

/// Evaluates every configured policy at every feedback budget on one frozen
/// test set with paired streams.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let policies: Vec<(PolicySpec, Resolved)> = cfg
        .eval
        .policies
        .iter()
        .map(|p| {
            let spec = PolicySpec::parse(p)?;
            let r = resolve(&spec, cfg)?;
            Ok((spec, r))
        })
        .collect::<Result<_>>()?;
    let scenarios = test_set(cfg)?;
    let root = experiment_root(cfg.system.seed);
    let episodes = root.derive(TEST_EPISODES);
    let mut rows = Vec::new();
    for &b_bits in &cfg.system.b_bits {
        let link = cfg.link(b_bits)?;
        for (spec, resolved) in &policies {
            let oracle;
            let scheme = match resolved {
                Resolved::Policy(p) => Scheme::Pipeline(p.as_ref()),
                Resolved::Baseline(b) => Scheme::Baseline(*b),
                Resolved::Oracle => {
                    oracle = OraclePolicy { link: &link, config: cfg.oracle_config(), streams: root.derive(ORACLE_STREAMS) };
                    Scheme::Pipeline(&oracle)
                }
            };
            let estimate = evaluate_scheme(&scenarios, scheme, &link, cfg.eval.n_channels_per_cov, &episodes)?;
            log::info!("{} B={b_bits}: {:.4} +- {:.4}", spec.name(), estimate.mean, estimate.std_error);
            rows.push(SweepRow {
                policy: spec.name(),
                b_bits,
                p_ul: ul_power_from_bits(b_bits, cfg.system.beta),
                paths: cfg.system.paths,
                estimate,
            });
        }
    }
    Ok(SweepReport { rows, test_set: scenarios })
}

pub fn sweep_csv(cfg: &ExperimentConfig, report: &SweepReport) -> String {
    let mut s = header_block(SWEEP_SCHEMA, cfg);
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{:e},{},{:e},{:e},{}\n",
            r.policy, r.b_bits, r.p_ul, r.paths, r.estimate.mean, r.estimate.std_error, r.estimate.n_episodes
        ));
    }
    s
}

pub fn sweep_scenario_csv(report: &SweepReport) -> String {
    let rows: Vec<ScenarioRow> = report
        .rows
        .iter()
        .flat_map(|r| {
            r.estimate.per_scenario.iter().enumerate().map(|(i, e)| ScenarioRow {
                scenario_id: i,
                policy: r.policy.clone(),
                b_bits: r.b_bits,
                paths: r.paths,
                estimate: *e,
            })
        })
        .collect();
    let mut buf = Vec::new();
    crate::evaluation::write_scenario_rows(&mut buf, &rows).expect("in-memory write");
    debug_assert!(String::from_utf8_lossy(&buf).starts_with(SCENARIO_CSV_HEADER));
    String::from_utf8(buf).expect("utf-8 csv")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `sweep.csv`, `sweep_scenarios.csv` and `test_set.txt`.
pub fn write_sweep(cfg: &ExperimentConfig, report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let sweep = dir.join("sweep.csv");
    write_file(&sweep, sweep_csv(cfg, report).as_bytes())?;
    let per = dir.join("sweep_scenarios.csv");
    write_file(&per, sweep_scenario_csv(report).as_bytes())?;
    let set = dir.join("test_set.txt");
    let mut buf = Vec::new();
    let header = ScenarioSetHeader {
        antennas: cfg.system.antennas,
        users: cfg.system.users,
        paths: cfg.system.paths,
        seed: cfg.system.seed,
    };
    write_scenario_set(&mut buf, &header, &report.test_set).map_err(|e| Error::io(&set, e))?;
    write_file(&set, &buf)?;
    Ok(vec![sweep, per, set])
}

pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let link = cfg.link(cfg.train_b_bits())?;
    train_dnn(&cfg.distribution()?, &cfg.train_config()?, &link)
}

pub fn curve_csv(cfg: &ExperimentConfig, outcome: &TrainOutcome) -> String {
    let mut s = header_block(CURVE_SCHEMA, cfg);
    s.push_str(&format!("# lambda-one validation sum-rate: {:e}\n", outcome.lambda_one_validation));
    s.push_str("iteration,validation_sum_rate,best_so_far\n");
    for p in &outcome.curve {
        s.push_str(&format!("{},{:e},{:e}\n", p.iteration, p.validation_sum_rate, p.best_so_far));
    }
    s
}

/// Writes `checkpoint.txt` and `training_curve.csv`.
pub fn write_training(cfg: &ExperimentConfig, outcome: &TrainOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let ckpt = dir.join("checkpoint.txt");
    save_checkpoint(&outcome.params, &ckpt)?;
    let curve = dir.join("training_curve.csv");
    write_file(&curve, curve_csv(cfg, outcome).as_bytes())?;
    Ok(vec![ckpt, curve])
}

/// Selections of the configured heat-map policy on `n` fresh scenarios,
/// one row per scenario. The oracle uses the first feedback budget of the
/// sweep list.
pub fn dump_lambda_heatmap(cfg: &ExperimentConfig, n: usize) -> Result<Vec<Vec<f64>>> {
    let spec = PolicySpec::parse(&cfg.eval.heatmap_policy)?;
    let root = experiment_root(cfg.system.seed);
    let scenarios = cfg.distribution()?.sample_many(n, &mut root.derive(HEATMAP_SET))?;
    let link = cfg.link(cfg.system.b_bits[0])?;
    let policy: Box<dyn Policy + '_> = match resolve(&spec, cfg)? {
        Resolved::Policy(p) => p,
        Resolved::Oracle => Box::new(OraclePolicy {
            link: &link,
            config: cfg.oracle_config(),
            streams: root.derive(HEATMAP_ORACLE),
        }),
        Resolved::Baseline(_) => return Err(Error::Config("heat map needs a beam-selection policy".into())),
    };
    use rayon::prelude::*;
    scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| policy.select(i, s).map(BeamSelection::into_vec))
        .collect()
}

pub fn heatmap_csv(cfg: &ExperimentConfig, rows: &[Vec<f64>]) -> String {
    let mut s = header_block(HEATMAP_SCHEMA, cfg);
    let m = cfg.system.antennas;
    let cols: Vec<String> = (0..m).map(|j| format!("beam_{j}")).collect();
    s.push_str(&cols.join(","));
    s.push('\n');
    for r in rows {
        let vals: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&vals.join(","));
        s.push('\n');
    }
    s
}

pub fn write_heatmap(cfg: &ExperimentConfig, rows: &[Vec<f64>], dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("heatmap.csv");
    write_file(&path, heatmap_csv(cfg, rows).as_bytes())?;
    Ok(path)
}

pub fn validate_csv(cfg: &ExperimentConfig, checks: &[InvariantCheck]) -> String {
    let mut s = header_block(VALIDATE_SCHEMA, cfg);
    s.push_str("check,worst,tolerance,pass\n");
    for c in checks {
        s.push_str(&format!("{},{:e},{:e},{}\n", c.name, c.worst, c.tolerance, c.passed()));
    }
    s
}

pub fn write_validate(cfg: &ExperimentConfig, checks: &[InvariantCheck], dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("validate.csv");
    write_file(&path, validate_csv(cfg, checks).as_bytes())?;
    Ok(path)
}

pub(crate) fn validate_streams(seed: u64) -> RngStream {
    experiment_root(seed).derive(VALIDATE_STREAMS)
}
