//! Plant description text format: flat `key = value` lines, `#` comments.
//!
//! Keys by plant type (exact names; unknown keys are rejected):
//! - `type = impulse`: `taps` (comma/space-separated reals), optional
//!   `horizon` (must match the tap count when given)
//! - `type = statespace`: `A` (rows separated by `;`), `B`, `C`, `D`,
//!   `horizon`, `time_domain` (`continuous` default, or `discrete`),
//!   and `dt` (required for continuous models, which get discretized by
//!   exact zero-order hold)
//! - `type = mimo`: `channels`, `horizon`, and one `block_<i>_<j>` tap list
//!   per pair, 1-indexed, row `i` = output channel, column `j` = input
//! - `type = random`: `seed`, `order`, `horizon` (the reproducible random
//!   stable plant generator)

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lti::{
    random_stable_plant, zoh_discretize, ImpulseResponse, MimoPlant, StateSpaceModel, TimeDomain,
};
use crate::probe::Plant;

/// A parsed plant description, not yet realized as an operator.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantSpec {
    Impulse {
        taps: Vec<f64>,
    },
    StateSpace {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        d: f64,
        dt: Option<f64>,
        time_domain: TimeDomain,
        horizon: usize,
    },
    Mimo {
        channels: usize,
        horizon: usize,
        /// Row-major blocks of taps.
        blocks: Vec<Vec<Vec<f64>>>,
    },
    Random {
        seed: u64,
        order: usize,
        horizon: usize,
    },
}

fn parse_reals(v: &str, what: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::PlantFile(format!("{what}: cannot parse `{s}` as a real")))
        })
        .collect()
}

fn parse_matrix(v: &str, what: &str) -> Result<Vec<Vec<f64>>> {
    v.split(';')
        .map(|row| parse_reals(row, what))
        .collect::<Result<Vec<_>>>()
}

struct KeyMap(BTreeMap<String, (String, bool)>);

impl KeyMap {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.get_mut(key).map(|(v, used)| {
            *used = true;
            v.clone()
        })
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| Error::PlantFile(format!("missing required key `{key}`")))
    }

    fn unused(&self) -> Vec<String> {
        self.0
            .iter()
            .filter(|(_, (_, used))| !used)
            .map(|(k, _)| k.clone())
            .collect()
    }
}

fn key_map(text: &str) -> Result<KeyMap> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::PlantFile(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim().to_string();
        if map
            .insert(k.clone(), (v.trim().to_string(), false))
            .is_some()
        {
            return Err(Error::PlantFile(format!("duplicate key `{k}`")));
        }
    }
    Ok(KeyMap(map))
}

fn parse_usize(v: &str, what: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::PlantFile(format!("{what}: cannot parse `{v}` as an integer")))
}

/// Parses a plant description; rejects unknown keys.
pub fn parse_plant_text(text: &str) -> Result<PlantSpec> {
    let mut keys = key_map(text)?;
    let kind = keys.require("type")?;
    let spec = match kind.as_str() {
        "impulse" => {
            let taps = parse_reals(&keys.require("taps")?, "taps")?;
            if let Some(h) = keys.take("horizon") {
                let h = parse_usize(&h, "horizon")?;
                if h != taps.len() {
                    return Err(Error::PlantFile(format!(
                        "horizon {h} does not match {} taps",
                        taps.len()
                    )));
                }
            }
            PlantSpec::Impulse { taps }
        }
        "statespace" => {
            let a = parse_matrix(&keys.require("A")?, "A")?;
            let b = parse_reals(&keys.require("B")?, "B")?;
            let c = parse_reals(&keys.require("C")?, "C")?;
            let d_list = parse_reals(&keys.require("D")?, "D")?;
            if d_list.len() != 1 {
                return Err(Error::PlantFile("D must be a single scalar".into()));
            }
            let time_domain = match keys.take("time_domain").as_deref() {
                None | Some("continuous") => TimeDomain::Continuous,
                Some("discrete") => TimeDomain::Discrete,
                Some(other) => {
                    return Err(Error::PlantFile(format!(
                        "time_domain must be continuous or discrete, got `{other}`"
                    )))
                }
            };
            let dt = keys
                .take("dt")
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::PlantFile(format!("dt: cannot parse `{v}`")))
                })
                .transpose()?;
            if time_domain == TimeDomain::Continuous && dt.is_none() {
                return Err(Error::PlantFile(
                    "continuous state-space plants need `dt` for discretization".into(),
                ));
            }
            let horizon = parse_usize(&keys.require("horizon")?, "horizon")?;
            PlantSpec::StateSpace {
                a,
                b,
                c,
                d: d_list[0],
                dt,
                time_domain,
                horizon,
            }
        }
        "mimo" => {
            let channels = parse_usize(&keys.require("channels")?, "channels")?;
            let horizon = parse_usize(&keys.require("horizon")?, "horizon")?;
            let mut blocks = Vec::with_capacity(channels);
            for i in 1..=channels {
                let mut row = Vec::with_capacity(channels);
                for j in 1..=channels {
                    let key = format!("block_{i}_{j}");
                    let taps = parse_reals(&keys.require(&key)?, &key)?;
                    if taps.len() != horizon {
                        return Err(Error::PlantFile(format!(
                            "{key} has {} taps, expected horizon {horizon}",
                            taps.len()
                        )));
                    }
                    row.push(taps);
                }
                blocks.push(row);
            }
            PlantSpec::Mimo {
                channels,
                horizon,
                blocks,
            }
        }
        "random" => {
            let seed = keys
                .require("seed")?
                .parse::<u64>()
                .map_err(|_| Error::PlantFile("seed: not a nonnegative integer".into()))?;
            let order = parse_usize(&keys.require("order")?, "order")?;
            let horizon = parse_usize(&keys.require("horizon")?, "horizon")?;
            PlantSpec::Random {
                seed,
                order,
                horizon,
            }
        }
        other => {
            return Err(Error::PlantFile(format!(
                "unknown plant type `{other}` (expected impulse|statespace|mimo|random)"
            )))
        }
    };
    let unused = keys.unused();
    if !unused.is_empty() {
        return Err(Error::PlantFile(format!(
            "unknown or inapplicable keys: {}",
            unused.join(", ")
        )));
    }
    Ok(spec)
}

/// Realizes a parsed description as the hidden operator.
pub fn build_plant(spec: &PlantSpec) -> Result<Plant> {
    match spec {
        PlantSpec::Impulse { taps } => Ok(Plant::Siso(ImpulseResponse::new(taps.clone())?)),
        PlantSpec::StateSpace {
            a,
            b,
            c,
            d,
            dt,
            time_domain,
            horizon,
        } => {
            let model = StateSpaceModel::new(a.clone(), b.clone(), c.clone(), *d, *time_domain)?;
            let h = match time_domain {
                TimeDomain::Continuous => zoh_discretize(&model, dt.unwrap(), *horizon)?,
                TimeDomain::Discrete => model.impulse_taps(*horizon)?,
            };
            Ok(Plant::Siso(h))
        }
        PlantSpec::Mimo { blocks, .. } => {
            let rows = blocks
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|taps| ImpulseResponse::new(taps.clone()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Plant::Mimo(MimoPlant::new(rows)?))
        }
        PlantSpec::Random {
            seed,
            order,
            horizon,
        } => Ok(Plant::Siso(random_stable_plant(*seed, *order, *horizon)?)),
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Writes a description back out in the same format `parse_plant_text` reads.
pub fn plant_to_text(spec: &PlantSpec) -> String {
    match spec {
        PlantSpec::Impulse { taps } => {
            format!(
                "type = impulse\nhorizon = {}\ntaps = {}\n",
                taps.len(),
                join(taps)
            )
        }
        PlantSpec::StateSpace {
            a,
            b,
            c,
            d,
            dt,
            time_domain,
            horizon,
        } => {
            let rows = a.iter().map(|r| join(r)).collect::<Vec<_>>().join("; ");
            let mut out = format!(
                "type = statespace\nA = {rows}\nB = {}\nC = {}\nD = {}\nhorizon = {horizon}\n",
                join(b),
                join(c),
                d
            );
            match time_domain {
                TimeDomain::Continuous => {
                    out.push_str(&format!("dt = {}\n", dt.unwrap_or(0.0)));
                }
                TimeDomain::Discrete => out.push_str("time_domain = discrete\n"),
            }
            out
        }
        PlantSpec::Mimo {
            channels,
            horizon,
            blocks,
        } => {
            let mut out = format!("type = mimo\nchannels = {channels}\nhorizon = {horizon}\n");
            for (i, row) in blocks.iter().enumerate() {
                for (j, taps) in row.iter().enumerate() {
                    out.push_str(&format!("block_{}_{} = {}\n", i + 1, j + 1, join(taps)));
                }
            }
            out
        }
        PlantSpec::Random {
            seed,
            order,
            horizon,
        } => format!("type = random\nseed = {seed}\norder = {order}\nhorizon = {horizon}\n"),
    }
}
