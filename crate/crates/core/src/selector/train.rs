//! Training loop for the beam-selection network.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::adam::Adam;
use super::mlp::{feature_batch, MlpParams, Mode};
use super::spsa::spsa_gradient;
use crate::channel::{sample_scenario, ArrayGeometry, CovarianceScenario};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_policy, LambdaOne, LinkConfig, PreparedPipeline};
use crate::numerics::RngStream;
use crate::precoding::BeamSelection;

// stream labels under the training seed
const BATCH_SCENARIOS: u64 = 1;
const BATCH_EPISODES: u64 = 2;
const VALIDATION_SCENARIOS: u64 = 3;
const VALIDATION_EPISODES: u64 = 4;
const INIT: u64 = 5;
const PERTURBATION: u64 = 6;

/// D(L): K independent users, L paths each.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioDistribution {
    pub geometry: ArrayGeometry,
    pub paths: usize,
    pub users: usize,
    pub power_range: (f64, f64),
}

impl ScenarioDistribution {
    pub fn sample(&self, rng: &mut RngStream) -> Result<CovarianceScenario> {
        sample_scenario(self.paths, self.users, &self.geometry, self.power_range, rng)
    }

    pub fn sample_many(&self, n: usize, rng: &mut RngStream) -> Result<Vec<CovarianceScenario>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Where training and validation scenarios come from.
pub trait ScenarioSource: Sync {
    fn antennas(&self) -> usize;
    fn users(&self) -> usize;
    fn draw(&self, rng: &mut RngStream) -> Result<CovarianceScenario>;

    fn draw_many(&self, n: usize, rng: &mut RngStream) -> Result<Vec<CovarianceScenario>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

impl ScenarioSource for ScenarioDistribution {
    fn antennas(&self) -> usize {
        self.geometry.antennas()
    }

    fn users(&self) -> usize {
        self.users
    }

    fn draw(&self, rng: &mut RngStream) -> Result<CovarianceScenario> {
        self.sample(rng)
    }
}

/// Degenerate source that always yields the same scenario.
#[derive(Clone, Debug)]
pub struct FixedScenario(pub CovarianceScenario);

impl ScenarioSource for FixedScenario {
    fn antennas(&self) -> usize {
        self.0.antennas()
    }

    fn users(&self) -> usize {
        self.0.users()
    }

    fn draw(&self, _rng: &mut RngStream) -> Result<CovarianceScenario> {
        Ok(self.0.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientEngine {
    /// SPSA over all trainable parameters with common random numbers.
    AdamSpsa,
    /// Exact backprop through the network; the sum-rate sensitivity to each
    /// beam gain comes from central differences on common random numbers.
    AdamBackprop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_iterations: usize,
    pub optimizer: GradientEngine,
    /// SPSA perturbation size, and the beam-gain step of the backprop engine.
    pub spsa_c: f64,
    /// SPSA perturbations averaged per iteration.
    pub spsa_samples: usize,
    pub eval_interval: usize,
    pub seed: u64,
    pub hidden: [usize; 2],
    /// Episodes per training scenario per objective evaluation.
    pub n_channels: usize,
    pub n_validation: usize,
    pub n_validation_channels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 2e-3,
            n_iterations: 500,
            optimizer: GradientEngine::AdamSpsa,
            spsa_c: 1e-2,
            spsa_samples: 1,
            eval_interval: 25,
            seed: 0,
            hidden: [256, 128],
            n_channels: 4,
            n_validation: 64,
            n_validation_channels: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("train.batch_size must be >= 2 (batch-norm statistics)".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if !(self.spsa_c > 0.0) {
            return Err(Error::Config("train.spsa_c must be > 0".into()));
        }
        if self.eval_interval == 0 || self.spsa_samples == 0 || self.n_channels == 0 || self.n_validation == 0 || self.n_validation_channels == 0 {
            return Err(Error::Config("train counts must be >= 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("train.hidden sizes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub validation_sum_rate: f64,
    pub best_so_far: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Final parameters, in eval mode.
    pub params: MlpParams,
    pub curve: Vec<CurvePoint>,
    /// `lambda = 1` on the validation streams.
    pub lambda_one_validation: f64,
}

/// Network in eval mode as a policy.
pub struct MlpPolicy<'a>(pub &'a MlpParams);

impl crate::evaluation::Policy for MlpPolicy<'_> {
    fn select(&self, _index: usize, scenario: &CovarianceScenario) -> Result<BeamSelection> {
        let mut p = self.0.clone();
        p.set_mode(Mode::Eval);
        let out = p.forward(&feature_batch(&[scenario]))?;
        Ok(BeamSelection::clamped(out.row(0).iter().copied().collect()))
    }
}

/// Mean paired sum-rate of per-scenario selections (rows of `lambda`).
fn batch_objective(
    scenarios: &[CovarianceScenario],
    lambda: &DMatrix<f64>,
    link: &LinkConfig,
    n_channels: usize,
    streams: &RngStream,
) -> Result<f64> {
    let per: Vec<f64> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, scn)| scenario_objective(scn, lambda.row(i).iter().copied().collect(), link, n_channels, &streams.derive(i as u64)))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

fn scenario_objective(
    scn: &CovarianceScenario,
    lambda: Vec<f64>,
    link: &LinkConfig,
    n_channels: usize,
    stream: &RngStream,
) -> Result<f64> {
    let pipe = PreparedPipeline::new(scn, &BeamSelection::clamped(lambda), link)?;
    let mut total = 0.0;
    for e in 0..n_channels {
        total += pipe.run(&stream.derive(e as u64))?.report.sum_rate;
    }
    Ok(total / n_channels as f64)
}

/// d(mean sum-rate)/d(lambda) per scenario by central differences,
/// clipped to the unit box.
fn lambda_sensitivities(
    scenarios: &[CovarianceScenario],
    lambda: &DMatrix<f64>,
    link: &LinkConfig,
    n_channels: usize,
    step: f64,
    streams: &RngStream,
) -> Result<DMatrix<f64>> {
    let m = lambda.ncols();
    let rows: Vec<Vec<f64>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, scn)| {
            let stream = streams.derive(i as u64);
            let base: Vec<f64> = lambda.row(i).iter().copied().collect();
            (0..m)
                .map(|j| {
                    let hi = (base[j] + step).min(1.0);
                    let lo = (base[j] - step).max(0.0);
                    let mut up = base.clone();
                    up[j] = hi;
                    let mut down = base.clone();
                    down[j] = lo;
                    let diff = scenario_objective(scn, up, link, n_channels, &stream)?
                        - scenario_objective(scn, down, link, n_channels, &stream)?;
                    Ok(diff / (hi - lo))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(rows.len(), m, |r, c| rows[r][c]))
}

fn validation_score(
    params: &MlpParams,
    scenarios: &[CovarianceScenario],
    link: &LinkConfig,
    n_channels: usize,
    streams: &RngStream,
) -> Result<f64> {
    Ok(evaluate_policy(scenarios, &MlpPolicy(params), link, n_channels, streams)?.mean)
}

/// Gradient of `-mean_i J_i` over the batch with respect to the trainable
/// parameters, estimated by `cfg.optimizer`. `episodes` fixes the channel
/// and noise draws of every objective evaluation; `perturbation` seeds the
/// SPSA directions.
pub fn loss_gradient(
    params: &MlpParams,
    batch: &[CovarianceScenario],
    link: &LinkConfig,
    cfg: &TrainConfig,
    episodes: &RngStream,
    perturbation: &RngStream,
) -> Result<Vec<f64>> {
    let refs: Vec<&CovarianceScenario> = batch.iter().collect();
    let features = feature_batch(&refs);
    let theta = params.trainable();
    match cfg.optimizer {
        GradientEngine::AdamSpsa => {
            let objective = |flat: &[f64]| -> Result<f64> {
                let lambda = params.with_trainable(flat)?.forward_with(&features, Mode::Train)?.output;
                batch_objective(batch, &lambda, link, cfg.n_channels, episodes)
            };
            let mut acc = vec![0.0; theta.len()];
            for j in 0..cfg.spsa_samples {
                let g = spsa_gradient(&theta, cfg.spsa_c, &objective, &mut perturbation.derive(j as u64))?;
                acc.iter_mut().zip(&g).for_each(|(a, g)| *a += g / cfg.spsa_samples as f64);
            }
            Ok(acc)
        }
        GradientEngine::AdamBackprop => {
            let fwd = params.forward_with(&features, Mode::Train)?;
            let sens = lambda_sensitivities(batch, &fwd.output, link, cfg.n_channels, cfg.spsa_c, episodes)?;
            let d_out = sens * (-1.0 / batch.len() as f64);
            Ok(params.backward(&fwd.cache, &d_out))
        }
    }
}

/// Trains the beam-selection network to maximize the empirical mean
/// sum-rate over D(L).
///
/// Iteration `t` draws a fresh batch of scenarios and episode streams keyed
/// by `(seed, t)`, estimates the gradient with the configured engine and
/// takes one Adam step. A frozen validation set is scored every
/// `eval_interval` iterations and at the end. Everything is a function of
/// `cfg.seed`.
pub fn train_dnn(dist: &dyn ScenarioSource, cfg: &TrainConfig, link: &LinkConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, 0);
    let mut params = MlpParams::init(dist.antennas(), dist.users(), cfg.hidden, &mut root.derive(INIT))?;

    let validation = dist.draw_many(cfg.n_validation, &mut root.derive(VALIDATION_SCENARIOS))?;
    let val_streams = root.derive(VALIDATION_EPISODES);
    let lambda_one_validation =
        evaluate_policy(&validation, &LambdaOne, link, cfg.n_validation_channels, &val_streams)?.mean;

    let mut curve = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut record = |iteration: usize, params: &MlpParams, curve: &mut Vec<CurvePoint>| -> Result<()> {
        let score = validation_score(params, &validation, link, cfg.n_validation_channels, &val_streams)?;
        best = best.max(score);
        log::info!("iteration {iteration}: validation sum-rate {score:.4} (best {best:.4})");
        curve.push(CurvePoint { iteration, validation_sum_rate: score, best_so_far: best });
        Ok(())
    };
    record(0, &params, &mut curve)?;

    let mut theta = params.trainable();
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);
    for t in 0..cfg.n_iterations {
        let batch = dist.draw_many(cfg.batch_size, &mut root.derive(BATCH_SCENARIOS).derive(t as u64))?;
        let refs: Vec<&CovarianceScenario> = batch.iter().collect();
        let features = feature_batch(&refs);
        let streams = root.derive(BATCH_EPISODES).derive(t as u64);

        let fwd = params.forward_with(&features, Mode::Train)?;
        let perturb = root.derive(PERTURBATION).derive(t as u64);
        let grad = loss_gradient(&params, &batch, link, cfg, &streams, &perturb)?;
        adam.step(&mut theta, &grad);
        params.update_running_stats(fwd.stats.as_ref().expect("train-mode stats"), batch.len());
        params.set_trainable(&theta)?;

        let done = t + 1;
        if done % cfg.eval_interval == 0 || done == cfg.n_iterations {
            record(done, &params, &mut curve)?;
        }
    }
    params.set_mode(Mode::Eval);
    Ok(TrainOutcome { params, curve, lambda_one_validation })
}
