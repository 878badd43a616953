//! Configuration documents: a grid, an optional scenario and analysis settings.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use passivity_core::network::{assemble, Microgrid};
use passivity_core::passivity::{DEFAULT_WINDOW_GRID, DEFAULT_WINDOW_TOL};
use passivity_core::sim::{Scenario, ScenarioSettings};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

fn positioned(e: serde_json::Error) -> ConfigError {
    ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    /// Scan points of the voltage window search.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Bisection tolerance on window edges (V).
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_samples")]
    pub monotonicity_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Trailing window (s) over which a segment must stay flat to count as settled.
    #[serde(default = "default_settle_window")]
    pub settle_window: f64,
    /// Peak-to-peak amplitude allowed over the settle window (V).
    #[serde(default = "default_settle_tol")]
    pub settle_tol: f64,
}

fn default_v_min() -> f64 {
    10.0
}
fn default_v_max() -> f64 {
    1000.0
}
fn default_grid() -> usize {
    DEFAULT_WINDOW_GRID
}
fn default_tol() -> f64 {
    DEFAULT_WINDOW_TOL
}
fn default_samples() -> usize {
    1000
}
fn default_settle_window() -> f64 {
    0.02
}
fn default_settle_tol() -> f64 {
    1e-3
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            v_min: default_v_min(),
            v_max: default_v_max(),
            grid: default_grid(),
            tol: default_tol(),
            monotonicity_samples: default_samples(),
            seed: 0,
            settle_window: default_settle_window(),
            settle_tol: default_settle_tol(),
        }
    }
}

impl Analysis {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(format!("analysis: {m}")));
        if !(self.v_min > 0.0 && self.v_max > self.v_min && self.v_max.is_finite()) {
            return bad("need 0 < v_min < v_max");
        }
        if self.grid < 2 {
            return bad("grid needs at least 2 points");
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad("tol must be positive");
        }
        if !(self.settle_window > 0.0 && self.settle_tol > 0.0) {
            return bad("settle_window and settle_tol must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub grid: Microgrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSettings>,
    #[serde(default)]
    pub analysis: Analysis,
}

impl ConfigDocument {
    pub fn validate(&self) -> Result<(), ConfigError> {
        assemble(&self.grid).map_err(|e| ConfigError::Invalid(format!("grid: {e}")))?;
        if let Some(s) = &self.scenario {
            Scenario::new(self.grid.clone(), s.clone())
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("scenario: {e}")))?;
        }
        self.analysis.validate()
    }

    pub fn scenario(&self) -> Option<Scenario> {
        self.scenario.clone().map(|s| Scenario::new(self.grid.clone(), s))
    }
}

/// Several named documents in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSuite {
    pub scenarios: BTreeMap<String, ConfigDocument>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Single(Box<ConfigDocument>),
    Suite(ConfigSuite),
}

impl ConfigFile {
    /// Documents with their names; a single document is unnamed.
    pub fn documents(&self) -> Vec<(Option<&str>, &ConfigDocument)> {
        match self {
            ConfigFile::Single(d) => vec![(None, &**d)],
            ConfigFile::Suite(s) => s.scenarios.iter().map(|(k, d)| (Some(k.as_str()), d)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            ConfigFile::Single(d) => serde_json::to_string_pretty(d),
            ConfigFile::Suite(s) => serde_json::to_string_pretty(s),
        }
        .expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut ids = HashSet::new();
        for (name, doc) in self.documents() {
            doc.validate().map_err(|e| match name {
                Some(n) => ConfigError::Invalid(format!("scenario `{n}`: {e}")),
                None => e,
            })?;
            for load in &doc.grid.loads {
                if !ids.insert(load.id.as_str()) {
                    return Err(ConfigError::Invalid(format!(
                        "load id `{}` appears in more than one scenario",
                        load.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Multipliers for the unit suffixes accepted on string-valued numbers.
const UNITS: &[(&str, f64)] = &[
    ("W", 1.0),
    ("kW", 1e3),
    ("MW", 1e6),
    ("VAr", 1.0),
    ("kVAr", 1e3),
    ("MVAr", 1e6),
    ("V", 1.0),
    ("kV", 1e3),
    ("A", 1.0),
    ("S", 1.0),
    ("mS", 1e-3),
    ("ohm", 1.0),
    ("mohm", 1e-3),
    ("H", 1.0),
    ("mH", 1e-3),
    ("uH", 1e-6),
    ("F", 1.0),
    ("mF", 1e-3),
    ("uF", 1e-6),
    ("nF", 1e-9),
    ("s", 1.0),
    ("ms", 1e-3),
    ("us", 1e-6),
];

fn with_unit(s: &str) -> Option<f64> {
    let (num, unit) = s.trim().split_once(' ')?;
    let value: f64 = num.parse().ok()?;
    let factor = UNITS.iter().find(|(u, _)| *u == unit.trim())?.1;
    Some(value * factor)
}

/// Replaces every `"<number> <unit>"` string by its SI value. Returns whether
/// anything changed.
fn normalize_units(v: &mut Value) -> bool {
    match v {
        Value::String(s) => match with_unit(s).and_then(serde_json::Number::from_f64) {
            Some(n) => {
                *v = Value::Number(n);
                true
            }
            None => false,
        },
        Value::Array(items) => items.iter_mut().fold(false, |acc, x| normalize_units(x) | acc),
        Value::Object(map) => map.values_mut().fold(false, |acc, x| normalize_units(x) | acc),
        _ => false,
    }
}

fn from_value<T: serde::de::DeserializeOwned>(text: &str, value: Value, had_units: bool) -> Result<T, ConfigError> {
    if had_units {
        serde_json::from_value(value).map_err(|e| ConfigError::Invalid(e.to_string()))
    } else {
        // parsing the text again keeps line and column in the message
        serde_json::from_str(text).map_err(positioned)
    }
}

pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let mut value: Value = serde_json::from_str(text).map_err(positioned)?;
    let had_units = normalize_units(&mut value);
    let file = if value.get("scenarios").is_some() {
        ConfigFile::Suite(from_value(text, value, had_units)?)
    } else {
        ConfigFile::Single(Box::new(from_value(text, value, had_units)?))
    };
    file.validate()?;
    Ok(file)
}

pub fn load_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}
