//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::air::NoiseMode;
use crate::channel::{ArrayGeometry, DEFAULT_POWER_RANGE};
use crate::error::{Error, Result};
use crate::evaluation::LinkConfig;
use crate::numerics::mix64;
use crate::selector::{GradientEngine, OracleConfig, ScenarioDistribution, TrainConfig};

/// Label mixed into the seed for the pilot mixing matrix.
const PILOT_LABEL: u64 = 0x5049_4c4f_54;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub train: TrainSection,
    /// Not embedded in CSV headers, so outputs do not depend on where they
    /// are written.
    #[serde(default, skip_serializing)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Antennas `M`.
    pub antennas: usize,
    /// Users `K`.
    pub users: usize,
    /// Pilot length.
    pub beta: usize,
    pub p_dl: f64,
    /// Paths per user `L`.
    pub paths: usize,
    pub b_bits: Vec<f64>,
    #[serde(default = "default_theta_max_deg")]
    pub theta_max_deg: f64,
    /// Element spacing over wavelength; derived from the aperture if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_ratio: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: Noise,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    #[default]
    On,
    Off,
}

impl From<Noise> for NoiseMode {
    fn from(n: Noise) -> Self {
        match n {
            Noise::On => NoiseMode::On,
            Noise::Off => NoiseMode::Off,
        }
    }
}

fn default_theta_max_deg() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_test_cov: usize,
    pub n_channels_per_cov: usize,
    /// `lambda-one`, `per-instance-oracle`, `zf-perfect`, `mrt` or
    /// `dnn:<checkpoint path>`.
    pub policies: Vec<String>,
    pub oracle_budget: usize,
    pub oracle_channels: usize,
    pub heatmap_realizations: usize,
    pub heatmap_policy: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_test_cov: 1000,
            n_channels_per_cov: 10,
            policies: vec!["lambda-one".into(), "zf-perfect".into(), "mrt".into()],
            oracle_budget: OracleConfig::default().budget,
            oracle_channels: OracleConfig::default().n_channels,
            heatmap_realizations: 50,
            heatmap_policy: "per-instance-oracle".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Feedback budget used while training; the first sweep value if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_bits: Option<f64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_iterations: usize,
    /// `adam-spsa` or `adam-backprop`.
    pub optimizer: String,
    pub spsa_c: f64,
    pub spsa_samples: usize,
    pub eval_interval: usize,
    pub hidden: [usize; 2],
    pub n_channels: usize,
    pub n_validation: usize,
    pub n_validation_channels: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            b_bits: None,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            n_iterations: t.n_iterations,
            optimizer: "adam-spsa".into(),
            spsa_c: t.spsa_c,
            spsa_samples: t.spsa_samples,
            eval_interval: t.eval_interval,
            hidden: t.hidden,
            n_channels: t.n_channels,
            n_validation: t.n_validation,
            n_validation_channels: t.n_validation_channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// A policy named in the config.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    LambdaOne,
    Oracle,
    ZfPerfect,
    Mrt,
    Dnn(PathBuf),
}

impl PolicySpec {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "lambda-one" => Self::LambdaOne,
            "per-instance-oracle" => Self::Oracle,
            "zf-perfect" => Self::ZfPerfect,
            "mrt" => Self::Mrt,
            _ => match s.strip_prefix("dnn:") {
                Some(p) if !p.is_empty() => Self::Dnn(PathBuf::from(p)),
                _ => {
                    return Err(Error::Config(format!(
                        "unknown policy `{s}` (expected lambda-one, per-instance-oracle, zf-perfect, mrt or dnn:<path>)"
                    )))
                }
            },
        })
    }

    pub fn name(&self) -> String {
        match self {
            Self::LambdaOne => "lambda-one".into(),
            Self::Oracle => "per-instance-oracle".into(),
            Self::ZfPerfect => "zf-perfect".into(),
            Self::Mrt => "mrt".into(),
            Self::Dnn(p) => format!("dnn:{}", p.display()),
        }
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be >= 1")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text. A CSV written by this crate is accepted too: its
    /// embedded `# config:` block is used.
    pub fn from_str(text: &str) -> Result<Self> {
        let embedded: Vec<&str> = text
            .lines()
            .filter_map(|l| l.strip_prefix(super::CONFIG_PREFIX))
            .collect();
        let toml_text = if embedded.is_empty() { text.to_string() } else { embedded.join("\n") };
        let cfg: Self = toml::from_str(&toml_text).map_err(|e| Error::Config(describe_toml_error(&toml_text, &e)))?;
        cfg.validate().map_err(|e| match e {
            Error::Config(msg) => Error::Config(locate(&toml_text, msg)),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        positive("system.antennas", s.antennas)?;
        positive("system.users", s.users)?;
        positive("system.beta", s.beta)?;
        positive("system.paths", s.paths)?;
        if !(s.p_dl > 0.0 && s.p_dl.is_finite()) {
            return Err(Error::Config("system.p_dl must be > 0".into()));
        }
        if s.b_bits.is_empty() {
            return Err(Error::Config("system.b_bits must list at least one value".into()));
        }
        if let Some(b) = s.b_bits.iter().chain(&self.train.b_bits).find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::Config(format!("B_bits must be >= 0, got {b}")));
        }
        self.geometry()?;
        let e = &self.eval;
        positive("eval.n_test_cov", e.n_test_cov)?;
        positive("eval.n_channels_per_cov", e.n_channels_per_cov)?;
        positive("eval.oracle_budget", e.oracle_budget)?;
        positive("eval.oracle_channels", e.oracle_channels)?;
        positive("eval.heatmap_realizations", e.heatmap_realizations)?;
        for p in &e.policies {
            PolicySpec::parse(p)?;
        }
        match PolicySpec::parse(&e.heatmap_policy)? {
            PolicySpec::ZfPerfect | PolicySpec::Mrt => {
                return Err(Error::Config("eval.heatmap_policy must select beams (not zf-perfect or mrt)".into()))
            }
            _ => {}
        }
        self.train_config()?.validate()
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        let s = &self.system;
        let theta = s.theta_max_deg.to_radians();
        let geom = match s.spacing_ratio {
            Some(r) => ArrayGeometry::new(s.antennas, theta, r),
            None => ArrayGeometry::with_aperture(s.antennas, theta),
        };
        geom.map_err(|e| Error::Config(format!("array geometry: {e}")))
    }

    pub fn distribution(&self) -> Result<ScenarioDistribution> {
        Ok(ScenarioDistribution {
            geometry: self.geometry()?,
            paths: self.system.paths,
            users: self.system.users,
            power_range: DEFAULT_POWER_RANGE,
        })
    }

    pub fn pilot_seed(&self) -> u64 {
        mix64(self.system.seed, PILOT_LABEL)
    }

    pub fn link(&self, b_bits: f64) -> Result<LinkConfig> {
        let s = &self.system;
        Ok(LinkConfig::from_bits(s.antennas, s.beta, s.p_dl, b_bits, self.pilot_seed())?.with_noise(s.noise.into()))
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            budget: self.eval.oracle_budget,
            n_channels: self.eval.oracle_channels,
            ..OracleConfig::default()
        }
    }

    pub fn train_b_bits(&self) -> f64 {
        self.train.b_bits.unwrap_or(self.system.b_bits[0])
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let optimizer = match t.optimizer.as_str() {
            "adam-spsa" => GradientEngine::AdamSpsa,
            "adam-backprop" => GradientEngine::AdamBackprop,
            other => {
                return Err(Error::Config(format!(
                    "unknown train.optimizer `{other}` (expected adam-spsa or adam-backprop)"
                )))
            }
        };
        Ok(TrainConfig {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            n_iterations: t.n_iterations,
            optimizer,
            spsa_c: t.spsa_c,
            spsa_samples: t.spsa_samples,
            eval_interval: t.eval_interval,
            seed: self.system.seed,
            hidden: t.hidden,
            n_channels: t.n_channels,
            n_validation: t.n_validation,
            n_validation_channels: t.n_validation_channels,
        })
    }
}

/// Prefixes a validation message with the line of its first backquoted
/// token, when that token appears in the source.
fn locate(text: &str, msg: String) -> String {
    let token = msg.split('`').nth(1).filter(|t| !t.is_empty());
    let line = token.and_then(|t| text.lines().position(|l| l.contains(t)));
    match line {
        Some(i) => format!("line {}: {msg}", i + 1),
        None => msg,
    }
}

fn describe_toml_error(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message();
    match err.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            let src = text.lines().nth(line - 1).unwrap_or("").trim();
            format!("line {line}: {msg} (`{src}`)")
        }
        None => msg.to_string(),
    }
}
