//! Per-episode rates, end-to-end episodes and paired Monte Carlo estimates
//! of the ergodic sum-rate.
//!
//! Every episode owns a stream; inside it, sub-streams are fixed by role
//! (channel draw, downlink noise, uplink noise per user), so two policies
//! evaluated on the same stream see identical channels and noise no matter
//! what their beam selections are.

use std::io::Write;

use rayon::prelude::*;

use crate::air::{
    analog_feedback, build_pilot_matrix, dl_pilot_rx, ul_feedback_rx, FeedbackConfig, LmmseEstimator,
    NoiseMode, PilotConfig,
};
use crate::channel::{sample_channels, ChannelRealization, CovarianceScenario};
use crate::error::{Error, Result};
use crate::numerics::{dft_matrix, Complex64, ComplexMatrix, ComplexVector, RngStream};
use crate::precoding::{mrt_perfect, pre_beamformer, zf_effective, zf_perfect, BeamSelection, Precoder};

const CHANNEL_STREAM: u64 = 0;
const PILOT_NOISE_STREAM: u64 = 1;
const UPLINK_NOISE_STREAM: u64 = 2;

/// How users scale their pilot observations before feeding them back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeedbackGain {
    /// `rho_k = beta P_ul / |y_k|^2`.
    Normalized,
    /// `rho_k` pinned to a constant, no normalization. Makes the
    /// observation model jointly Gaussian, so the LMMSE estimate is exact.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorMode {
    Lmmse,
    /// Hands the true effective channels `B H` to the precoder.
    Genie,
}

/// Everything an episode needs besides the scenario and beam selection.
#[derive(Clone, Debug)]
pub struct LinkConfig {
    pub pilot: PilotConfig,
    pub feedback: FeedbackConfig,
    pub noise: NoiseMode,
    pub gain: FeedbackGain,
    pub estimator: EstimatorMode,
    dft: ComplexMatrix,
}

impl LinkConfig {
    pub fn new(pilot: PilotConfig, feedback: FeedbackConfig) -> Result<Self> {
        let dft = dft_matrix(pilot.antennas())?;
        Ok(Self {
            pilot,
            feedback,
            noise: NoiseMode::On,
            gain: FeedbackGain::Normalized,
            estimator: EstimatorMode::Lmmse,
            dft,
        })
    }

    /// Random `W` from `w_seed` and `P_ul` derived from the bit budget.
    pub fn from_bits(antennas: usize, beta: usize, p_dl: f64, b_bits: f64, w_seed: u64) -> Result<Self> {
        let pilot = PilotConfig::generate(beta, antennas, p_dl, w_seed)?;
        Self::new(pilot, FeedbackConfig::from_bits(b_bits, beta))
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_gain(mut self, gain: FeedbackGain) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_estimator(mut self, estimator: EstimatorMode) -> Self {
        self.estimator = estimator;
        self
    }

    /// Same link with a different feedback budget.
    pub fn with_bits(mut self, b_bits: f64) -> Self {
        self.feedback = FeedbackConfig::from_bits(b_bits, self.pilot.beta);
        self
    }

    pub fn antennas(&self) -> usize {
        self.dft.nrows()
    }

    pub fn p_dl(&self) -> f64 {
        self.pilot.p_dl
    }

    pub fn dft(&self) -> &ComplexMatrix {
        &self.dft
    }
}

/// Per-user rates of one channel use, interference treated as noise.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub per_user_rates: Vec<f64>,
    pub sum_rate: f64,
    pub signal_powers: Vec<f64>,
    pub interference_powers: Vec<f64>,
}

/// `R_k = log2(1 + |v_k h_k|^2 / (1 + sum_{j != k} |v_j h_k|^2))`.
pub fn instantaneous_rates(precoder: &Precoder, channels: &ChannelRealization) -> Result<RateReport> {
    let v = &precoder.v;
    let h = &channels.h;
    if v.ncols() != h.nrows() || v.nrows() != h.ncols() {
        return Err(Error::InvalidDimension(format!(
            "precoder {}x{} vs channels {}x{}",
            v.nrows(),
            v.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    let gains = v * h; // (j, k) = v_j h_k
    let users = h.ncols();
    let mut per_user_rates = Vec::with_capacity(users);
    let mut signal_powers = Vec::with_capacity(users);
    let mut interference_powers = Vec::with_capacity(users);
    for k in 0..users {
        let signal = gains[(k, k)].norm_sqr();
        let interference: f64 = (0..users).filter(|&j| j != k).map(|j| gains[(j, k)].norm_sqr()).sum();
        per_user_rates.push((signal / (1.0 + interference)).ln_1p() / std::f64::consts::LN_2);
        signal_powers.push(signal);
        interference_powers.push(interference);
    }
    let sum_rate = per_user_rates.iter().sum();
    Ok(RateReport {
        per_user_rates,
        sum_rate,
        signal_powers,
        interference_powers,
    })
}

/// Result of one end-to-end episode.
#[derive(Clone, Debug)]
pub struct Episode {
    pub report: RateReport,
    pub rho: Vec<Option<f64>>,
    /// Users whose pilot observation was empty; their estimate is zero.
    pub degenerate_feedback: Vec<usize>,
    /// The ZF precoder could not be formed and nothing was transmitted.
    pub degenerate_precoder: bool,
}

/// Scenario- and selection-dependent quantities shared by all episodes.
#[derive(Clone, Debug)]
pub struct PreparedPipeline<'a> {
    scenario: &'a CovarianceScenario,
    cfg: &'a LinkConfig,
    b: ComplexMatrix,
    x_p: ComplexMatrix,
}

impl<'a> PreparedPipeline<'a> {
    pub fn new(scenario: &'a CovarianceScenario, selection: &BeamSelection, cfg: &'a LinkConfig) -> Result<Self> {
        if scenario.antennas() != cfg.antennas() {
            return Err(Error::InvalidDimension(format!(
                "scenario has M={}, link has M={}",
                scenario.antennas(),
                cfg.antennas()
            )));
        }
        let b = pre_beamformer(selection, &cfg.dft)?;
        let x_p = build_pilot_matrix(&cfg.pilot, &b)?;
        Ok(Self { scenario, cfg, b, x_p })
    }

    pub fn pre_beamformer(&self) -> &ComplexMatrix {
        &self.b
    }

    pub fn pilot_matrix(&self) -> &ComplexMatrix {
        &self.x_p
    }

    pub fn run(&self, rng: &RngStream) -> Result<Episode> {
        let channels = sample_channels(self.scenario, &mut rng.derive(CHANNEL_STREAM));
        self.run_on(&channels, rng)
    }

    /// Runs the air interface and precoding on given channels; noise comes
    /// from the episode stream `rng`.
    pub fn run_on(&self, channels: &ChannelRealization, rng: &RngStream) -> Result<Episode> {
        let cfg = self.cfg;
        let users = self.scenario.users();
        let m = self.scenario.antennas();
        let beta = cfg.pilot.beta;
        let y_p = dl_pilot_rx(&self.x_p, channels, cfg.noise, &mut rng.derive(PILOT_NOISE_STREAM));

        let mut g_hat = ComplexMatrix::zeros(m, users);
        let mut rho = Vec::with_capacity(users);
        let mut degenerate_feedback = Vec::new();
        for k in 0..users {
            let mut uplink = rng.derive(UPLINK_NOISE_STREAM + k as u64);
            let y_k: ComplexVector = y_p.column(k).into_owned();
            let fed_back = match cfg.gain {
                FeedbackGain::Normalized => analog_feedback(&y_k, beta, cfg.feedback.p_ul),
                FeedbackGain::Fixed(r) => Ok((&y_k * Complex64::new(r.sqrt(), 0.0), r)),
            };
            let (x_fb, rho_k) = match fed_back {
                Ok(v) => v,
                Err(Error::DegenerateObservation(e)) => {
                    log::debug!("user {k}: degenerate pilot observation ({e:e}), estimate set to zero");
                    degenerate_feedback.push(k);
                    rho.push(None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            rho.push(Some(rho_k));
            let y_fb = ul_feedback_rx(&x_fb, cfg.noise, &mut uplink);
            // zero uplink power carries no information: the estimate stays at 0
            if cfg.estimator == EstimatorMode::Lmmse && rho_k > 0.0 {
                let est = LmmseEstimator::new(rho_k, &self.x_p, &self.b, self.scenario.covariance(k))?;
                g_hat.set_column(k, &est.estimate(&y_fb));
            }
        }
        if cfg.estimator == EstimatorMode::Genie {
            g_hat = &self.b * &channels.h;
        }

        let (precoder, degenerate_precoder) = match zf_effective(&g_hat, &self.b, cfg.p_dl()) {
            Ok(p) => (p, false),
            Err(Error::DegeneratePrecoder(cond)) => {
                log::debug!("degenerate effective channel estimate (cond {cond:e}), scoring zero rate");
                (Precoder::silent(users, m), true)
            }
            Err(e) => return Err(e),
        };
        Ok(Episode {
            report: instantaneous_rates(&precoder, channels)?,
            rho,
            degenerate_feedback,
            degenerate_precoder,
        })
    }
}

/// Training, feedback, estimation, precoding and rate evaluation for one
/// channel draw. Deterministic given `rng`.
pub fn run_episode(
    scenario: &CovarianceScenario,
    selection: &BeamSelection,
    cfg: &LinkConfig,
    rng: &RngStream,
) -> Result<Episode> {
    PreparedPipeline::new(scenario, selection, cfg)?.run(rng)
}

/// Perfect-CSI reference precoders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    ZfPerfect,
    Mrt,
}

/// Baseline episode on the same channel draw a pipeline episode with the
/// same stream would see.
pub fn run_baseline_episode(
    scenario: &CovarianceScenario,
    baseline: Baseline,
    p_dl: f64,
    rng: &RngStream,
) -> Result<RateReport> {
    let channels = sample_channels(scenario, &mut rng.derive(CHANNEL_STREAM));
    let built = match baseline {
        Baseline::ZfPerfect => zf_perfect(&channels.h, p_dl),
        Baseline::Mrt => mrt_perfect(&channels.h, p_dl),
    };
    let precoder = match built {
        Ok(p) => p,
        Err(Error::DegeneratePrecoder(_)) => Precoder::silent(scenario.users(), scenario.antennas()),
        Err(e) => return Err(e),
    };
    instantaneous_rates(&precoder, &channels)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErgodicEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_episodes: usize,
}

impl ErgodicEstimate {
    /// Standard error is `s / sqrt(n)` with the unbiased sample deviation,
    /// zero for a single sample.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: 0.0, std_error: 0.0, n_episodes: 0 };
        }
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let std_error = if n > 1 {
            let ss = compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean)));
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n_episodes: n }
    }
}

/// Mean sum-rate of one selection over `n_channels` episodes; episode `e`
/// uses stream `rng.derive(e)`.
pub fn ergodic_sum_rate(
    scenario: &CovarianceScenario,
    selection: &BeamSelection,
    cfg: &LinkConfig,
    n_channels: usize,
    rng: &RngStream,
) -> Result<ErgodicEstimate> {
    if n_channels == 0 {
        return Err(Error::Contract("need at least one channel draw".into()));
    }
    let pipeline = PreparedPipeline::new(scenario, selection, cfg)?;
    let rates = (0..n_channels)
        .map(|e| pipeline.run(&rng.derive(e as u64)).map(|ep| ep.report.sum_rate))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErgodicEstimate::from_samples(&rates))
}

/// Maps a scenario (and its index in the evaluated list) to a selection.
pub trait Policy: Sync {
    fn select(&self, index: usize, scenario: &CovarianceScenario) -> Result<BeamSelection>;
}

impl<F> Policy for F
where
    F: Fn(usize, &CovarianceScenario) -> Result<BeamSelection> + Sync,
{
    fn select(&self, index: usize, scenario: &CovarianceScenario) -> Result<BeamSelection> {
        self(index, scenario)
    }
}

/// The all-ones selection, `B = F^H`.
pub struct LambdaOne;

impl Policy for LambdaOne {
    fn select(&self, _index: usize, scenario: &CovarianceScenario) -> Result<BeamSelection> {
        Ok(BeamSelection::ones(scenario.antennas()))
    }
}

#[derive(Clone, Copy)]
pub enum Scheme<'a> {
    Pipeline(&'a dyn Policy),
    Baseline(Baseline),
}

/// Grand mean over scenarios of per-scenario ergodic means.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEstimate {
    pub mean: f64,
    /// Standard error of the grand mean across scenario means.
    pub std_error: f64,
    pub n_episodes: usize,
    pub per_scenario: Vec<ErgodicEstimate>,
}

impl PolicyEstimate {
    fn from_scenarios(per_scenario: Vec<ErgodicEstimate>) -> Self {
        let means: Vec<f64> = per_scenario.iter().map(|e| e.mean).collect();
        let grand = ErgodicEstimate::from_samples(&means);
        Self {
            mean: grand.mean,
            std_error: grand.std_error,
            n_episodes: per_scenario.iter().map(|e| e.n_episodes).sum(),
            per_scenario,
        }
    }
}

/// Evaluates a scheme on a scenario list. Scenario `i`, episode `e` always
/// uses stream `rng.derive(i).derive(e)`, so schemes evaluated with the same
/// `rng` are paired. Scenarios fan out over the current rayon pool; results
/// are gathered in order and do not depend on the worker count.
pub fn evaluate_scheme(
    scenarios: &[CovarianceScenario],
    scheme: Scheme<'_>,
    cfg: &LinkConfig,
    n_channels: usize,
    rng: &RngStream,
) -> Result<PolicyEstimate> {
    if scenarios.is_empty() {
        return Err(Error::Contract("empty scenario list".into()));
    }
    if n_channels == 0 {
        return Err(Error::Contract("need at least one channel draw".into()));
    }
    let per_scenario = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, scn)| {
            let stream = rng.derive(i as u64);
            match scheme {
                Scheme::Pipeline(policy) => {
                    let selection = policy.select(i, scn)?;
                    ergodic_sum_rate(scn, &selection, cfg, n_channels, &stream)
                }
                Scheme::Baseline(b) => {
                    let rates = (0..n_channels)
                        .map(|e| run_baseline_episode(scn, b, cfg.p_dl(), &stream.derive(e as u64)).map(|r| r.sum_rate))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(ErgodicEstimate::from_samples(&rates))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyEstimate::from_scenarios(per_scenario))
}

pub fn evaluate_policy(
    scenarios: &[CovarianceScenario],
    policy: &dyn Policy,
    cfg: &LinkConfig,
    n_channels: usize,
    rng: &RngStream,
) -> Result<PolicyEstimate> {
    evaluate_scheme(scenarios, Scheme::Pipeline(policy), cfg, n_channels, rng)
}

/// Scenario-wise paired difference `a - b` of two estimates obtained on the
/// same streams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedComparison {
    pub mean_diff: f64,
    pub std_error: f64,
    pub n_scenarios: usize,
}

impl PairedComparison {
    pub fn new(a: &PolicyEstimate, b: &PolicyEstimate) -> Self {
        assert_eq!(a.per_scenario.len(), b.per_scenario.len(), "estimates are not paired");
        let diffs: Vec<f64> = a
            .per_scenario
            .iter()
            .zip(&b.per_scenario)
            .map(|(x, y)| x.mean - y.mean)
            .collect();
        let d = ErgodicEstimate::from_samples(&diffs);
        Self { mean_diff: d.mean, std_error: d.std_error, n_scenarios: diffs.len() }
    }

    /// `mean_diff - z * std_error`.
    pub fn lower_bound(&self, z: f64) -> f64 {
        self.mean_diff - z * self.std_error
    }
}

/// One-sided normal quantiles used by the statistical checks.
pub const Z_95: f64 = 1.6448536269514722;
pub const Z_99: f64 = 2.3263478740408408;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRow {
    pub scenario_id: usize,
    pub policy: String,
    pub b_bits: f64,
    pub paths: usize,
    pub estimate: ErgodicEstimate,
}

pub const SCENARIO_CSV_HEADER: &str = "scenario_id,policy,B_bits,L,mean_sum_rate,std_error,n";

pub fn write_scenario_rows<W: Write>(out: &mut W, rows: &[ScenarioRow]) -> std::io::Result<()> {
    writeln!(out, "{SCENARIO_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scenario_id, r.policy, r.b_bits, r.paths, r.estimate.mean, r.estimate.std_error, r.estimate.n_episodes
        )?;
    }
    Ok(())
}
