use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::branches::DEFAULT_DEPTH_CAP;
use crate::error::{Error, Result};
use crate::family::FamilySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Partition,
    ScalingGraph,
    ScalingPoint,
    GapFit,
    DimensionCurve,
    MetricCheck,
    DistortionCheck,
    JumpReport,
    Invariants,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Partition => "partition",
            Command::ScalingGraph => "scaling-graph",
            Command::ScalingPoint => "scaling-point",
            Command::GapFit => "gap-fit",
            Command::DimensionCurve => "dimension-curve",
            Command::MetricCheck => "metric-check",
            Command::DistortionCheck => "distortion-check",
            Command::JumpReport => "jump-report",
            Command::Invariants => "invariants",
        }
    }

    /// File name used when the config gives no `output`.
    pub fn default_output(self) -> String {
        let ext = match self {
            Command::Partition | Command::ScalingGraph | Command::DimensionCurve => "csv",
            Command::JumpReport => "txt",
            _ => "json",
        };
        format!("{}.{ext}", self.name())
    }

    fn needs_grid(self) -> bool {
        matches!(self, Command::GapFit | Command::DimensionCurve)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One experiment, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub command: Command,
    pub depth: usize,
    pub epsilon: f64,
    pub epsilon_grid: Option<Vec<f64>>,
    pub output: Option<String>,
    pub seed: u64,
    /// Dual points for `scaling-point` and `jump-report`, in their text form.
    pub points: Option<Vec<String>>,
    /// Sample count for the sampled checks.
    pub samples: Option<usize>,
}

pub const DEFAULT_DEPTH: usize = 12;

const KEYS: [&str; 9] =
    ["family", "command", "depth", "epsilon", "epsilon_grid", "output", "seed", "points", "samples"];

fn take<T: DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<Option<T>> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| Error::Config { key: key.into(), message: e.to_string() }),
    }
}

fn required<T: DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<T> {
    take(obj, key)?.ok_or_else(|| Error::Config { key: key.into(), message: "missing".into() })
}

impl ExperimentConfig {
    /// Parses and validates a config; errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config { key: "<document>".into(), message: e.to_string() })?;
        let Value::Object(mut obj) = value else {
            return Err(Error::Config { key: "<document>".into(), message: "expected a JSON object".into() });
        };
        if let Some(bad) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config { key: bad.clone(), message: "unknown key".into() });
        }
        let config = ExperimentConfig {
            family: required(&mut obj, "family")?,
            command: required(&mut obj, "command")?,
            depth: take(&mut obj, "depth")?.unwrap_or(DEFAULT_DEPTH),
            epsilon: take(&mut obj, "epsilon")?.unwrap_or(0.0),
            epsilon_grid: take(&mut obj, "epsilon_grid")?,
            output: take(&mut obj, "output")?,
            seed: take(&mut obj, "seed")?.unwrap_or(0),
            points: take(&mut obj, "points")?,
            samples: take(&mut obj, "samples")?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if self.depth > DEFAULT_DEPTH_CAP {
            return bad("depth", format!("{} exceeds the cap {DEFAULT_DEPTH_CAP}", self.depth));
        }
        if self.depth == 0 {
            return bad("depth", "must be at least 1".into());
        }
        let family = self.family.build().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::Config { key: "family".into(), message: other.to_string() },
        })?;
        let (lo, hi) = family.param_range;
        let in_range = |e: f64| e >= lo && e <= hi;
        if !in_range(self.epsilon) {
            return bad("epsilon", format!("{} outside [{lo}, {hi}]", self.epsilon));
        }
        match &self.epsilon_grid {
            Some(grid) => {
                if grid.len() < 2 {
                    return bad("epsilon_grid", "needs at least two values".into());
                }
                if grid.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("epsilon_grid", "must be sorted ascending without repeats".into());
                }
                if let Some(e) = grid.iter().find(|&&e| !in_range(e)) {
                    return bad("epsilon_grid", format!("{e} outside [{lo}, {hi}]"));
                }
                if self.command.needs_grid() && grid[0] <= 0.0 {
                    return bad("epsilon_grid", "values must be positive for log-log fits".into());
                }
            }
            None if self.command.needs_grid() => {
                return bad("epsilon_grid", format!("required by `{}`", self.command));
            }
            None => {}
        }
        if let Some(points) = &self.points {
            for p in points {
                if let Err(e) = p.parse::<crate::symbolic::DualPoint>() {
                    return bad("points", e.to_string());
                }
            }
        }
        if self.samples == Some(0) {
            return bad("samples", "must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(text: &str) -> String {
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_json(r#"{"family":{"kind":"tent"},"command":"invariants","seed":7}"#).unwrap();
        assert_eq!(c.command, Command::Invariants);
        assert_eq!(c.depth, DEFAULT_DEPTH);
        assert_eq!(c.seed, 7);
        assert_eq!(c.command.default_output(), "invariants.json");
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(r#"{"family":{"kind":"tent"},"command":"nope"}"#), "command");
        assert_eq!(key_of(r#"{"family":{"kind":"tent"},"command":"partition","depth":30}"#), "depth");
        assert_eq!(key_of(r#"{"family":{"kind":"tent"},"command":"partition","depth":"x"}"#), "depth");
        assert_eq!(key_of(r#"{"family":{"kind":"tent"},"command":"partition","colour":1}"#), "colour");
        assert_eq!(key_of(r#"{"command":"partition"}"#), "family");
        assert_eq!(key_of(r#"{"family":{"kind":"gamma_power"},"command":"partition"}"#), "family.gamma");
        assert_eq!(key_of(r#"{"family":{"kind":"tent"},"command":"gap-fit"}"#), "epsilon_grid");
        assert_eq!(
            key_of(r#"{"family":{"kind":"tent"},"command":"gap-fit","epsilon_grid":[0.1,0.01]}"#),
            "epsilon_grid"
        );
        assert_eq!(key_of(r#"{"family":{"kind":"figure6"},"command":"partition","epsilon":0.1}"#), "epsilon");
        assert_eq!(key_of(r#"{"family":{"kind":"tent"},"command":"jump-report","points":["x"]}"#), "points");
        assert_eq!(key_of(r#"{"family":{"kind":"figure6","c":0.1},"command":"partition"}"#), "family");
        assert_eq!(key_of("[1]"), "<document>");
    }
}
