//! Scenario registry, configs and output tables.

mod config;
pub mod destruction;
pub mod dyadic;
pub mod eigen_mc;
mod fit;
pub mod knapp;
mod output;
pub mod smoothing;
pub mod stein_tomas;
pub mod tail;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub use config::{parse_override, resolve_seed, typed, ExperimentConfig};
pub use destruction::{run_counterexample_destruction, DestructionParams, DestructionReport};
pub use dyadic::{run_dyadic_shell_demo, DyadicParams, DyadicReport, ShellProfile};
pub use eigen_mc::{run_eigen_bound_mc, EigenMcParams, EigenMcReport};
pub use fit::ScalingFit;
pub use knapp::{run_knapp_saturation, KnappParams, KnappReport};
pub use smoothing::{run_smoothing_scaling, SmoothingParams, SmoothingReport};
pub use stein_tomas::{run_stein_tomas_uniformity, SteinTomasParams, SteinTomasReport};
pub use tail::{run_tail_decay, TailParams, TailReport};
pub use output::{fit_tables, Cell, RunOutput, Table};

use crate::error::{Error, Result};

/// A named experiment: typed parameters with defaults, validated before any computation.
pub trait Scenario: Serialize + DeserializeOwned + Default + Send + Sync + 'static {
    const ID: &'static str;
    const SUMMARY: &'static str;
    fn validate(&self) -> Result<()>;
    fn execute(&self, seed: u64) -> Result<(Vec<Table>, Value)>;
}

trait Erased: Send + Sync {
    fn execute(&self, seed: u64) -> Result<(Vec<Table>, Value)>;
    fn parameters(&self) -> Value;
}

impl<S: Scenario> Erased for S {
    fn execute(&self, seed: u64) -> Result<(Vec<Table>, Value)> {
        Scenario::execute(self, seed)
    }

    fn parameters(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

pub struct ScenarioInfo {
    pub id: &'static str,
    pub summary: &'static str,
    defaults: fn() -> Value,
    prepare: fn(&Map<String, Value>) -> Result<Box<dyn Erased>>,
}

impl ScenarioInfo {
    /// Parameter names with their default values.
    pub fn defaults(&self) -> Value {
        (self.defaults)()
    }
}

fn info<S: Scenario>() -> ScenarioInfo {
    ScenarioInfo {
        id: S::ID,
        summary: S::SUMMARY,
        defaults: || serde_json::to_value(S::default()).unwrap_or(Value::Null),
        prepare: |m| {
            let s: S = typed(m)?;
            s.validate()?;
            Ok(Box::new(s))
        },
    }
}

pub fn scenarios() -> Vec<ScenarioInfo> {
    vec![
        info::<KnappParams>(),
        info::<SteinTomasParams>(),
        info::<SmoothingParams>(),
        info::<TailParams>(),
        info::<EigenMcParams>(),
        info::<DestructionParams>(),
        info::<DyadicParams>(),
    ]
}

pub fn find_scenario(id: &str) -> Result<ScenarioInfo> {
    let all = scenarios();
    let available = all.iter().map(|s| s.id).collect::<Vec<_>>().join(", ");
    all.into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::UnknownScenario { name: id.to_string(), available })
}

/// Plain-text listing, one scenario per line followed by its defaults.
pub fn list_scenarios() -> String {
    let mut out = String::new();
    for s in scenarios() {
        out.push_str(&format!("{:<28} {}\n", s.id, s.summary));
        if let Value::Object(m) = s.defaults() {
            let keys: Vec<String> = m.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.push_str(&format!("{:<28} {}\n", "", keys.join(" ")));
        }
    }
    out
}

pub fn list_scenarios_json() -> Value {
    Value::Array(
        scenarios()
            .iter()
            .map(|s| json!({ "id": s.id, "summary": s.summary, "defaults": s.defaults() }))
            .collect(),
    )
}

/// A validated run, ready to execute.
pub struct PreparedRun {
    pub scenario: &'static str,
    pub seed: u64,
    inner: Box<dyn Erased>,
}

impl PreparedRun {
    /// Resolved parameters, defaults filled in.
    pub fn parameters(&self) -> Value {
        self.inner.parameters()
    }

    pub fn run(&self) -> Result<RunOutput> {
        let (tables, summary) = self.inner.execute(self.seed)?;
        Ok(RunOutput { scenario: self.scenario.to_string(), parameters: self.parameters(), seed: self.seed, overrides: Vec::new(), tables, summary })
    }
}

pub fn prepare(id: &str, parameters: &Map<String, Value>, seed: u64) -> Result<PreparedRun> {
    let s = find_scenario(id)?;
    Ok(PreparedRun { scenario: s.id, seed, inner: (s.prepare)(parameters)? })
}
