//! Scenario configuration: JSON files, `--set` overrides and seed precedence.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::rng::{parse_seed, DEFAULT_SEED};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    /// Applies `key=value` overrides; values parse as JSON, else as plain strings.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = parse_override(o.as_ref())?;
            self.parameters.insert(k, v);
        }
        Ok(())
    }
}

pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{s}' is not of the form key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("override '{s}' has an empty key")));
    }
    let v = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string()));
    Ok((k.to_string(), v))
}

fn seed_value(v: &Value) -> Result<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => parse_seed(s),
        _ => None,
    }
    .ok_or_else(|| Error::Config(format!("seed {v} is not an unsigned 64-bit integer")))
}

/// Master seed: `--seed` flag, then the `seed` parameter (config file or `--set`),
/// then the environment, then the default.
pub fn resolve_seed(parameters: &Map<String, Value>, flag: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(v) = parameters.get("seed") {
        return seed_value(v);
    }
    if let Some(e) = env {
        return parse_seed(e).ok_or_else(|| Error::Config(format!("environment seed '{e}' is not a u64")));
    }
    Ok(DEFAULT_SEED)
}

/// Typed view of the parameter map (the `seed` key excluded); unknown keys and
/// ill-typed values are config errors.
pub fn typed<P: DeserializeOwned>(parameters: &Map<String, Value>) -> Result<P> {
    let mut m = parameters.clone();
    m.remove("seed");
    serde_json::from_value(Value::Object(m)).map_err(|e| Error::Config(format!("parameters: {e}")))
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}
