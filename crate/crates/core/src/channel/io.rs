//! Text format for frozen scenario sets.
//!
//! ```text
//! # prebeam scenario-set v1
//! M 16 K 3 L 8 seed 42 count 2
//! scenario 0
//! <re> <im> <re> <im> ...     (one line per user: M pairs, first covariance column)
//! ...
//! ```
//! Values carry 17 significant digits so a reload reproduces every bit.

use std::io::{BufRead, Write};

use super::CovarianceScenario;
use crate::error::{Error, Result};
use crate::numerics::{Complex64, ComplexMatrix};

const MAGIC: &str = "# prebeam scenario-set v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioSetHeader {
    pub antennas: usize,
    pub users: usize,
    pub paths: usize,
    pub seed: u64,
}

pub fn write_scenario_set<W: Write>(
    out: &mut W,
    header: &ScenarioSetHeader,
    scenarios: &[CovarianceScenario],
) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "M {} K {} L {} seed {} count {}",
        header.antennas,
        header.users,
        header.paths,
        header.seed,
        scenarios.len()
    )?;
    for (i, scn) in scenarios.iter().enumerate() {
        writeln!(out, "scenario {i}")?;
        let sigma = scn.sigma();
        for k in 0..sigma.ncols() {
            let line: Vec<String> = sigma
                .column(k)
                .iter()
                .map(|z| format!("{:.16e} {:.16e}", z.re, z.im))
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::ScenarioFile(format!("line {line}: {msg}"))
}

pub fn read_scenario_set<R: BufRead>(
    input: R,
) -> Result<(ScenarioSetHeader, Vec<CovarianceScenario>)> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((n, Err(e))) => Err(bad(n, e)),
            None => Err(Error::ScenarioFile(format!("unexpected end of file, expected {what}"))),
        }
    };

    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(bad(n, format!("expected '{MAGIC}'")));
    }
    let (n, dims) = next("dimension line")?;
    let tok: Vec<&str> = dims.split_whitespace().collect();
    let field = |key: &str| -> Result<u64> {
        let pos = tok
            .iter()
            .position(|t| *t == key)
            .ok_or_else(|| bad(n, format!("missing '{key}'")))?;
        tok.get(pos + 1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(n, format!("bad value for '{key}'")))
    };
    let header = ScenarioSetHeader {
        antennas: field("M")? as usize,
        users: field("K")? as usize,
        paths: field("L")? as usize,
        seed: field("seed")?,
    };
    let count = field("count")? as usize;

    let mut scenarios = Vec::with_capacity(count);
    for idx in 0..count {
        let (n, tag) = next("scenario tag")?;
        if tag.trim() != format!("scenario {idx}") {
            return Err(bad(n, format!("expected 'scenario {idx}'")));
        }
        let mut sigma = ComplexMatrix::zeros(header.antennas, header.users);
        for k in 0..header.users {
            let (n, row) = next("sigma column")?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| bad(n, e)))
                .collect::<Result<_>>()?;
            if vals.len() != 2 * header.antennas {
                return Err(bad(
                    n,
                    format!("expected {} values, found {}", 2 * header.antennas, vals.len()),
                ));
            }
            for m in 0..header.antennas {
                sigma[(m, k)] = Complex64::new(vals[2 * m], vals[2 * m + 1]);
            }
        }
        scenarios.push(CovarianceScenario::from_sigma(&sigma)?);
    }
    Ok((header, scenarios))
}
