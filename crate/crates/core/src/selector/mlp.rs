//! Three-layer perceptron mapping covariance features to beam gains.
//!
//! Each layer is batch-norm -> affine -> activation; hidden layers use ReLU
//! and the output layer `0.5 (tanh + 1)`, so every output lies in `(0, 1)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::channel::CovarianceScenario;
use crate::error::{Error, Result};
use crate::numerics::{Complex64, ComplexMatrix, RngStream};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// `[Re c_1; Im c_1; ...; Re c_K; Im c_K]`, length `2 M K`.
pub fn sigma_features(scenario: &CovarianceScenario) -> Vec<f64> {
    let sigma = scenario.sigma();
    let mut out = Vec::with_capacity(2 * sigma.len());
    for col in sigma.column_iter() {
        out.extend(col.iter().map(|z| z.re));
        out.extend(col.iter().map(|z| z.im));
    }
    out
}

/// Inverse of [`sigma_features`].
pub fn features_to_sigma(features: &[f64], antennas: usize, users: usize) -> Result<ComplexMatrix> {
    if features.len() != 2 * antennas * users {
        return Err(Error::InvalidDimension(format!(
            "{} features for M={antennas}, K={users}",
            features.len()
        )));
    }
    Ok(ComplexMatrix::from_fn(antennas, users, |m, k| {
        let base = 2 * antennas * k;
        Complex64::new(features[base + m], features[base + antennas + m])
    }))
}

/// Stacks scenario features as rows of an `N x 2MK` matrix.
pub fn feature_batch(scenarios: &[&CovarianceScenario]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = scenarios.iter().map(|s| sigma_features(s)).collect();
    let width = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), width, |r, c| rows[r][c])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for normalization.
    Train,
    /// Running statistics; a pure function of the input.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub scale: DVector<f64>,
    pub shift: DVector<f64>,
    pub running_mean: DVector<f64>,
    pub running_var: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub norm: BatchNorm,
    /// `out x in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn trainable_len(&self) -> usize {
        2 * self.inputs() + self.weight.len() + self.bias.len()
    }
}

/// Network parameters `Theta` plus batch-norm running state.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    /// `[input, hidden1, hidden2, output]`.
    pub layer_dims: [usize; 4],
    pub layers: Vec<Layer>,
    pub mode: Mode,
}

/// Per-layer batch mean and (biased) variance of the normalized inputs.
#[derive(Clone, Debug)]
pub struct BatchStats(Vec<(DVector<f64>, DVector<f64>)>);

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Per layer: normalized input, inverse std, post-affine input to the
    /// dense part, pre-activation.
    layers: Vec<LayerCache>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    x_hat: DMatrix<f64>,
    inv_std: DVector<f64>,
    affine_in: DMatrix<f64>,
    pre_act: DMatrix<f64>,
}

pub struct Forward {
    pub output: DMatrix<f64>,
    pub stats: Option<BatchStats>,
    pub cache: ForwardCache,
}

fn column_mean_var(x: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = x.nrows() as f64;
    let mean = DVector::from_fn(x.ncols(), |c, _| x.column(c).sum() / n);
    let var = DVector::from_fn(x.ncols(), |c, _| {
        x.column(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n
    });
    (mean, var)
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases, identity batch-norm and running
    /// statistics `(0, 1)`.
    pub fn init(antennas: usize, users: usize, hidden: [usize; 2], rng: &mut RngStream) -> Result<Self> {
        if antennas == 0 || users == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidDimension("all layer sizes must be >= 1".into()));
        }
        let dims = [2 * antennas * users, hidden[0], hidden[1], antennas];
        let layers = (0..3)
            .map(|l| {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit));
                Layer {
                    norm: BatchNorm {
                        scale: DVector::from_element(fan_in, 1.0),
                        shift: DVector::zeros(fan_in),
                        running_mean: DVector::zeros(fan_in),
                        running_var: DVector::from_element(fan_in, 1.0),
                    },
                    weight,
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layer_dims: dims, layers, mode: Mode::Train })
    }

    pub fn antennas(&self) -> usize {
        self.layer_dims[3]
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Forward pass in the current mode.
    pub fn forward(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_with(features, self.mode)?.output)
    }

    pub fn forward_with(&self, features: &DMatrix<f64>, mode: Mode) -> Result<Forward> {
        if features.ncols() != self.layer_dims[0] {
            return Err(Error::InvalidDimension(format!(
                "feature width {} but network expects {}",
                features.ncols(),
                self.layer_dims[0]
            )));
        }
        if mode == Mode::Train && features.nrows() < 2 {
            return Err(Error::Contract(
                "batch statistics need at least two samples; use eval mode".into(),
            ));
        }
        let n = features.nrows();
        let mut x = features.clone();
        let mut stats = Vec::with_capacity(3);
        let mut caches = Vec::with_capacity(3);
        for (l, layer) in self.layers.iter().enumerate() {
            let (mean, var) = match mode {
                Mode::Train => column_mean_var(&x),
                Mode::Eval => (layer.norm.running_mean.clone(), layer.norm.running_var.clone()),
            };
            let inv_std = var.map(|v| 1.0 / (v + BN_EPS).sqrt());
            let x_hat = DMatrix::from_fn(n, x.ncols(), |r, c| (x[(r, c)] - mean[c]) * inv_std[c]);
            let affine_in = DMatrix::from_fn(n, x.ncols(), |r, c| {
                x_hat[(r, c)] * layer.norm.scale[c] + layer.norm.shift[c]
            });
            let mut pre_act = &affine_in * layer.weight.transpose();
            for mut row in pre_act.row_iter_mut() {
                row += layer.bias.transpose();
            }
            x = if l + 1 < self.layers.len() {
                pre_act.map(|v| v.max(0.0))
            } else {
                pre_act.map(|v| 0.5 * (v.tanh() + 1.0))
            };
            if mode == Mode::Train {
                stats.push((mean, var));
            }
            caches.push(LayerCache { x_hat, inv_std, affine_in, pre_act });
        }
        Ok(Forward {
            output: x,
            stats: (mode == Mode::Train).then_some(BatchStats(stats)),
            cache: ForwardCache { layers: caches },
        })
    }

    /// Folds batch statistics into the running estimates (momentum 0.1,
    /// unbiased variance).
    pub fn update_running_stats(&mut self, stats: &BatchStats, batch_size: usize) {
        let correction = if batch_size > 1 {
            batch_size as f64 / (batch_size - 1) as f64
        } else {
            1.0
        };
        for (layer, (mean, var)) in self.layers.iter_mut().zip(&stats.0) {
            let bn = &mut layer.norm;
            bn.running_mean = &bn.running_mean * (1.0 - BN_MOMENTUM) + mean * BN_MOMENTUM;
            bn.running_var = &bn.running_var * (1.0 - BN_MOMENTUM) + var * (BN_MOMENTUM * correction);
        }
    }

    /// Number of trainable scalars (batch-norm scale/shift, weights, biases).
    pub fn trainable_len(&self) -> usize {
        self.layers.iter().map(Layer::trainable_len).sum()
    }

    /// Trainable parameters flattened per layer as
    /// `scale, shift, weight (row-major), bias`.
    pub fn trainable(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_len());
        for layer in &self.layers {
            out.extend(layer.norm.scale.iter());
            out.extend(layer.norm.shift.iter());
            for r in 0..layer.outputs() {
                out.extend(layer.weight.row(r).iter());
            }
            out.extend(layer.bias.iter());
        }
        out
    }

    pub fn set_trainable(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.trainable_len() {
            return Err(Error::InvalidDimension(format!(
                "{} values for {} trainable parameters",
                flat.len(),
                self.trainable_len()
            )));
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            let (inp, out) = (layer.inputs(), layer.outputs());
            for i in 0..inp {
                layer.norm.scale[i] = it.next().unwrap();
            }
            for i in 0..inp {
                layer.norm.shift[i] = it.next().unwrap();
            }
            for r in 0..out {
                for c in 0..inp {
                    layer.weight[(r, c)] = it.next().unwrap();
                }
            }
            for r in 0..out {
                layer.bias[r] = it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Copy with trainable parameters replaced by `flat`.
    pub fn with_trainable(&self, flat: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        p.set_trainable(flat)?;
        Ok(p)
    }

    /// Gradient of a loss with respect to the trainable parameters, given
    /// the loss gradient `d_out` (N x M) at the network output and the cache
    /// of a train-mode forward pass. Same layout as [`MlpParams::trainable`].
    pub fn backward(&self, cache: &ForwardCache, d_out: &DMatrix<f64>) -> Vec<f64> {
        let n = d_out.nrows() as f64;
        let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        let mut grad = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            // through the activation
            let dz = if l + 1 == self.layers.len() {
                grad.zip_map(&lc.pre_act, |g, z| {
                    let t = z.tanh();
                    g * 0.5 * (1.0 - t * t)
                })
            } else {
                grad.zip_map(&lc.pre_act, |g, z| if z > 0.0 { g } else { 0.0 })
            };
            let d_weight = dz.transpose() * &lc.affine_in;
            let d_bias = DVector::from_fn(dz.ncols(), |c, _| dz.column(c).sum());
            let du = &dz * &layer.weight;
            let inp = layer.inputs();
            let d_scale = DVector::from_fn(inp, |c, _| du.column(c).dot(&lc.x_hat.column(c)));
            let d_shift = DVector::from_fn(inp, |c, _| du.column(c).sum());
            // batch-norm input gradient with batch statistics
            let dx_hat = DMatrix::from_fn(du.nrows(), inp, |r, c| du[(r, c)] * layer.norm.scale[c]);
            let sum_dx = DVector::from_fn(inp, |c, _| dx_hat.column(c).sum());
            let sum_dx_x = DVector::from_fn(inp, |c, _| dx_hat.column(c).dot(&lc.x_hat.column(c)));
            grad = DMatrix::from_fn(du.nrows(), inp, |r, c| {
                lc.inv_std[c] / n * (n * dx_hat[(r, c)] - sum_dx[c] - lc.x_hat[(r, c)] * sum_dx_x[c])
            });

            let mut flat = Vec::with_capacity(layer.trainable_len());
            flat.extend(d_scale.iter());
            flat.extend(d_shift.iter());
            for r in 0..layer.outputs() {
                flat.extend(d_weight.row(r).iter());
            }
            flat.extend(d_bias.iter());
            per_layer[l] = flat;
        }
        per_layer.concat()
    }
}
