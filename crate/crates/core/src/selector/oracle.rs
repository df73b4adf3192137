//! Direct per-instance search over `lambda`, used as a reference policy.

use rand::Rng;

use crate::channel::CovarianceScenario;
use crate::error::{Error, Result};
use crate::evaluation::{LinkConfig, PreparedPipeline};
use crate::numerics::RngStream;
use crate::precoding::BeamSelection;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    /// Maximum number of objective evaluations, each over `n_channels` episodes.
    pub budget: usize,
    pub n_channels: usize,
    /// Grid steps for the coordinate passes, coarse to fine.
    pub steps: [f64; 3],
    /// Perturbation and move size for the final SPSA polish.
    pub spsa_c: f64,
    pub spsa_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            budget: 160,
            n_channels: 16,
            steps: [0.5, 0.25, 0.125],
            spsa_c: 0.1,
            spsa_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub selection: BeamSelection,
    /// Paired score of `selection` on the search streams.
    pub score: f64,
    /// Paired score of `lambda = 1` on the same streams.
    pub baseline_score: f64,
    pub evaluations: usize,
}

struct Search<'a> {
    scenario: &'a CovarianceScenario,
    link: &'a LinkConfig,
    streams: Vec<RngStream>,
    budget: usize,
    used: usize,
    best: Vec<f64>,
    best_score: f64,
}

impl Search<'_> {
    fn exhausted(&self) -> bool {
        self.used >= self.budget
    }

    fn score(&mut self, lambda: &[f64]) -> Result<f64> {
        self.used += 1;
        let sel = BeamSelection::clamped(lambda.to_vec());
        let pipe = PreparedPipeline::new(self.scenario, &sel, self.link)?;
        let mut total = 0.0;
        for s in &self.streams {
            total += pipe.run(s)?.report.sum_rate;
        }
        Ok(total / self.streams.len() as f64)
    }

    /// Scores `candidate` and keeps it if it strictly improves.
    fn try_candidate(&mut self, candidate: Vec<f64>) -> Result<bool> {
        let s = self.score(&candidate)?;
        if s > self.best_score {
            self.best = candidate;
            self.best_score = s;
            return Ok(true);
        }
        Ok(false)
    }
}

fn grid_candidates(current: f64, step: f64, first: bool) -> Vec<f64> {
    let raw: Vec<f64> = if first {
        let n = (1.0 / step).round() as usize;
        (0..=n).map(|i| i as f64 * step).collect()
    } else {
        vec![current - step, current + step]
    };
    raw.into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .filter(|v| (v - current).abs() > 1e-12)
        .collect()
}

/// Greedy search for a selection that maximizes the paired sum-rate of one
/// scenario. Starts at `lambda = 1`, runs coordinate passes over a coarse to
/// fine grid, then spends what is left of the budget on an SPSA polish.
/// Only strict improvements are accepted, so the result never scores below
/// `lambda = 1` on the search streams.
pub fn optimize_lambda_instance(
    scenario: &CovarianceScenario,
    link: &LinkConfig,
    cfg: &OracleConfig,
    rng: &RngStream,
) -> Result<OracleOutcome> {
    if cfg.budget == 0 || cfg.n_channels == 0 {
        return Err(Error::Contract("oracle needs a positive budget and channel count".into()));
    }
    let m = scenario.antennas();
    let mut search = Search {
        scenario,
        link,
        streams: (0..cfg.n_channels as u64).map(|e| rng.derive(e)).collect(),
        budget: cfg.budget,
        used: 0,
        best: vec![1.0; m],
        best_score: f64::NEG_INFINITY,
    };
    let ones = vec![1.0; m];
    let baseline_score = search.score(&ones)?;
    search.best_score = baseline_score;

    'grid: for (level, &step) in cfg.steps.iter().enumerate() {
        loop {
            let mut improved = false;
            for i in 0..m {
                for v in grid_candidates(search.best[i], step, level == 0) {
                    if search.exhausted() {
                        break 'grid;
                    }
                    let mut cand = search.best.clone();
                    cand[i] = v;
                    improved |= search.try_candidate(cand)?;
                }
            }
            if !improved {
                break;
            }
        }
    }

    let mut polish = rng.derive(u64::MAX);
    while search.used + 3 <= search.budget {
        let delta: Vec<f64> = (0..m).map(|_| if polish.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = search.best.iter().zip(&delta).map(|(l, d)| (l + cfg.spsa_c * d).clamp(0.0, 1.0)).collect();
        let minus: Vec<f64> = search.best.iter().zip(&delta).map(|(l, d)| (l - cfg.spsa_c * d).clamp(0.0, 1.0)).collect();
        let base = search.best.clone();
        let jp = search.score(&plus)?;
        let jm = search.score(&minus)?;
        let slope = (jp - jm) / (2.0 * cfg.spsa_c);
        let cand: Vec<f64> = base
            .iter()
            .zip(&delta)
            .map(|(l, d)| (l + cfg.spsa_step * slope.signum() * d).clamp(0.0, 1.0))
            .collect();
        for (c, s) in [(plus, jp), (minus, jm)] {
            if s > search.best_score {
                search.best = c;
                search.best_score = s;
            }
        }
        search.try_candidate(cand)?;
    }

    Ok(OracleOutcome {
        selection: BeamSelection::clamped(search.best),
        score: search.best_score,
        baseline_score,
        evaluations: search.used,
    })
}
