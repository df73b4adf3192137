//! Plain-text checkpoints for [`MlpParams`].
//!
//! ```text
//! prebeam-mlp 1
//! dims 96 256 128 16
//! mode eval
//! layer0.scale 96
//! 1e0 1e0 ...
//! ```
//! Every array is a name/length line followed by one line of values in
//! shortest round-trip form. Weights are row-major `out x in`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::mlp::{BatchNorm, Layer, MlpParams, Mode};
use crate::error::{CheckpointError, Error, Result};

pub const CHECKPOINT_MAGIC: &str = "prebeam-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

const FIELDS: [&str; 6] = ["scale", "shift", "running_mean", "running_var", "weight", "bias"];

pub fn to_checkpoint_string(params: &MlpParams) -> String {
    let mut out = String::new();
    let d = params.layer_dims;
    writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
    writeln!(out, "dims {} {} {} {}", d[0], d[1], d[2], d[3]).unwrap();
    let mode = match params.mode {
        Mode::Train => "train",
        Mode::Eval => "eval",
    };
    writeln!(out, "mode {mode}").unwrap();
    for (l, layer) in params.layers.iter().enumerate() {
        let row_major: Vec<f64> = layer.weight.transpose().iter().copied().collect();
        let arrays: [&[f64]; 6] = [
            layer.norm.scale.as_slice(),
            layer.norm.shift.as_slice(),
            layer.norm.running_mean.as_slice(),
            layer.norm.running_var.as_slice(),
            &row_major,
            layer.bias.as_slice(),
        ];
        for (name, values) in FIELDS.iter().zip(arrays) {
            writeln!(out, "layer{l}.{name} {}", values.len()).unwrap();
            let line: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out
}

fn corrupt(line: usize, msg: impl std::fmt::Display) -> Error {
    CheckpointError::Corrupt(format!("line {line}: {msg}")).into()
}

pub fn from_checkpoint_str(text: &str) -> Result<MlpParams> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| lines.next().ok_or_else(|| Error::from(CheckpointError::Corrupt(format!("truncated before {what}"))));

    let (n, header) = next("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(corrupt(n, "not a prebeam network checkpoint"));
    }
    let version = parts.next().unwrap_or("");
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(CheckpointError::Version { found: version.to_string(), expected: CHECKPOINT_VERSION }.into());
    }

    let (n, dims_line) = next("dims")?;
    let dims: Vec<usize> = match dims_line.strip_prefix("dims ") {
        Some(rest) => rest.split_whitespace().map(|t| t.parse().map_err(|e| corrupt(n, e))).collect::<Result<_>>()?,
        None => return Err(corrupt(n, "expected `dims`")),
    };
    if dims.len() != 4 || dims.iter().any(|&d| d == 0) {
        return Err(corrupt(n, "`dims` needs four positive sizes"));
    }
    let layer_dims = [dims[0], dims[1], dims[2], dims[3]];

    let (n, mode_line) = next("mode")?;
    let mode = match mode_line {
        "mode train" => Mode::Train,
        "mode eval" => Mode::Eval,
        _ => return Err(corrupt(n, "expected `mode train` or `mode eval`")),
    };

    let mut layers = Vec::with_capacity(3);
    for l in 0..3 {
        let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
        let mut arrays = Vec::with_capacity(6);
        for name in FIELDS {
            let expected_len = match name {
                "weight" => fan_in * fan_out,
                "bias" => fan_out,
                _ => fan_in,
            };
            let key = format!("layer{l}.{name}");
            let (n, head) = next(&key)?;
            let mut it = head.split_whitespace();
            if it.next() != Some(key.as_str()) {
                return Err(corrupt(n, format!("expected `{key}`")));
            }
            let len: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| corrupt(n, "missing array length"))?;
            if len != expected_len {
                return Err(corrupt(n, format!("{key} has {len} entries, dims imply {expected_len}")));
            }
            let (n, body) = next(&key)?;
            let values: Vec<f64> =
                body.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| corrupt(n, e))).collect::<Result<_>>()?;
            if values.len() != len {
                return Err(corrupt(n, format!("{key}: expected {len} values, found {}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(corrupt(n, format!("{key}: non-finite value")));
            }
            arrays.push(values);
        }
        let mut it = arrays.into_iter();
        let mut take = || DVector::from_vec(it.next().unwrap());
        let norm = BatchNorm { scale: take(), shift: take(), running_mean: take(), running_var: take() };
        let weight = DMatrix::from_row_slice(fan_out, fan_in, take().as_slice());
        layers.push(Layer { norm, weight, bias: take() });
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(corrupt(n, format!("unexpected trailing content `{extra}`")));
    }
    Ok(MlpParams { layer_dims, layers, mode })
}

pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    std::fs::write(path, to_checkpoint_string(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_checkpoint_str(&text)
}

/// Loads and checks the network matches an `M`-antenna, `K`-user system.
pub fn load_checkpoint_for(path: &Path, antennas: usize, users: usize) -> Result<MlpParams> {
    let params = load_checkpoint(path)?;
    let [input, _, _, output] = params.layer_dims;
    if input != 2 * antennas * users || output != antennas {
        return Err(CheckpointError::Dimension(format!(
            "network is {input} -> {output}, system needs {} -> {antennas} (M={antennas}, K={users})",
            2 * antennas * users
        ))
        .into());
    }
    Ok(params)
}
