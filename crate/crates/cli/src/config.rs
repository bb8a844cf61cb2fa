//! Layered settings: built-in defaults, then the config file's top-level keys,
//! then its `[command]` table, then command-line flags.

use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::UsageError;

/// Parsed TOML config file, or an empty one.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        Ok(Self { table })
    }

    fn layer(&self, command: &str) -> Map<String, Value> {
        let mut out = Map::new();
        for (k, v) in &self.table {
            if !v.is_table() {
                out.insert(k.replace('-', "_"), toml_to_json(v));
            }
        }
        if let Some(toml::Value::Table(section)) = self.table.get(command) {
            for (k, v) in section {
                out.insert(k.replace('-', "_"), toml_to_json(v));
            }
        }
        out
    }

    /// Merges the file layers under `flags` (unset flags serialize to null)
    /// and deserializes the result into the command's settings type.
    pub fn resolve<F: Serialize, S: DeserializeOwned>(&self, command: &str, flags: &F) -> anyhow::Result<S> {
        let mut merged = self.layer(command);
        if let Value::Object(f) = serde_json::to_value(flags)? {
            for (k, v) in f {
                if !v.is_null() {
                    merged.insert(k, v);
                }
            }
        }
        serde_json::from_value(Value::Object(merged))
            .map_err(|e| UsageError(format!("{command}: {e}")).into())
    }
}

fn toml_to_json(v: &toml::Value) -> Value {
    match v {
        toml::Value::String(s) => Value::String(s.clone()),
        toml::Value::Integer(i) => Value::from(*i),
        toml::Value::Float(f) => Value::from(*f),
        toml::Value::Boolean(b) => Value::Bool(*b),
        toml::Value::Datetime(d) => Value::String(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => Value::Object(t.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect()),
    }
}
