//! Run manifests written next to every output.

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Everything needed to rerun an experiment. The `runtime` block (wall-clock
/// and thread count) is informational and excluded from reproducibility
/// comparisons; see [`RunManifest::reproducible_part`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub model: Value,
    pub engine: Value,
    pub scenario: Value,
    pub seed: u64,
    pub budgets: Value,
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
    pub runtime: Runtime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            tool: "gibbslab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            model: Value::Null,
            engine: Value::Null,
            scenario: Value::Null,
            seed,
            budgets: Value::Null,
            notes: Vec::new(),
            outputs: Vec::new(),
            runtime: Runtime { wall_clock_seconds: 0.0, threads: 1 },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// The manifest as JSON with the `runtime` block removed.
    pub fn reproducible_part(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        if let Value::Object(m) = &mut v {
            m.remove("runtime");
        }
        v
    }
}
