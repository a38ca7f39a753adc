//! JSON config files. A config holds optional top-level `seed` and `threads`
//! plus one object per subcommand; command-line flags override its values.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

const TOP_LEVEL: [&str; 2] = ["seed", "threads"];
const SECTIONS: [&str; 8] = ["synth", "train", "search", "baseline", "sweep", "project", "check", "pipeline"];

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)?;
        let Value::Object(root) = value else {
            return Err(CliError::usage("config file must hold a JSON object"));
        };
        for key in root.keys() {
            if !TOP_LEVEL.contains(&key.as_str()) && !SECTIONS.contains(&key.as_str()) {
                return Err(CliError::usage(format!("unknown config key {key:?}")));
            }
        }
        Ok(ConfigFile { root })
    }

    pub fn seed(&self) -> Result<Option<u64>> {
        self.top_level("seed")
    }

    pub fn threads(&self) -> Result<Option<usize>> {
        self.top_level("threads")
    }

    fn top_level<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.root
            .get(key)
            .map(|v| serde_json::from_value(v.clone()).map_err(|e| CliError::usage(format!("config {key}: {e}"))))
            .transpose()
    }

    pub fn section(&self, name: &str) -> Option<&Value> {
        self.root.get(name)
    }
}

/// Overlays the non-null fields of `flags` on the config section and parses
/// the result. Keys the section may hold are the fields of `T`.
pub fn merge<T: Serialize + DeserializeOwned + Default>(flags: &T, section: Option<&Value>) -> Result<T> {
    let allowed: BTreeSet<String> = match serde_json::to_value(T::default())? {
        Value::Object(m) => m.into_iter().map(|(k, _)| k).collect(),
        _ => BTreeSet::new(),
    };
    let mut merged = match section {
        None => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(CliError::usage("config sections must be JSON objects")),
    };
    if let Some(k) = merged.keys().find(|k| !allowed.contains(*k)) {
        return Err(CliError::usage(format!("unknown config key {k:?}")));
    }
    if let Value::Object(f) = serde_json::to_value(flags)? {
        for (k, v) in f {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("invalid configuration: {e}")))
}
