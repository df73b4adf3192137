//! Simultaneous-perturbation gradient estimates of an objective to be
//! maximized.

use rand::Rng;

use crate::error::Result;
use crate::numerics::RngStream;

pub fn rademacher(len: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..len).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Two-sided SPSA estimate along a given `delta` (entries +-1):
/// `-[(J(theta + c delta) - J(theta - c delta)) / 2c] * delta`.
///
/// The sign makes the result a descent direction for `-J`, so it can be fed
/// straight into a minimizing optimizer.
pub fn spsa_along<F>(theta: &[f64], c: f64, delta: &[f64], mut objective: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let plus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t + c * d).collect();
    let minus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t - c * d).collect();
    let slope = (objective(&plus)? - objective(&minus)?) / (2.0 * c);
    Ok(delta.iter().map(|d| -slope * d).collect())
}

/// [`spsa_along`] with a fresh Rademacher perturbation from `rng`.
pub fn spsa_gradient<F>(theta: &[f64], c: f64, objective: F, rng: &mut RngStream) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let delta = rademacher(theta.len(), rng);
    spsa_along(theta, c, &delta, objective)
}
