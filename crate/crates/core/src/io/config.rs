//! TOML run configuration.
//!
//! Top-level keys map to [`EmConfig`] fields; `[neural]`, `[propagation]`
//! and `[subrelation]` tables map to the nested option structs. Unknown
//! keys are rejected.

use std::path::Path;

use crate::em::EmConfig;
use crate::error::{Error, Result};

pub fn parse_config(text: &str) -> Result<EmConfig> {
    let config: EmConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<EmConfig> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn render_config(config: &EmConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(e.to_string()))
}

/// Sets one key, e.g. `delta` or `neural.dim`. `value` is read as a TOML
/// literal, falling back to a plain string.
pub fn set_config_value(config: &EmConfig, key: &str, value: &str) -> Result<EmConfig> {
    let mut doc = toml::Table::try_from(config).map_err(|e| Error::Config(e.to_string()))?;
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_owned()));

    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config("empty key".into()))?;
    let mut table = &mut doc;
    for part in parts {
        table = table
            .entry(part.to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` is not a section")))?;
    }
    table.insert(leaf.to_owned(), coerce(table.get(leaf), parsed));

    let updated: EmConfig = doc
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {}", e.message())))?;
    updated.validate()?;
    Ok(updated)
}

/// Integers given for float fields become floats.
fn coerce(existing: Option<&toml::Value>, value: toml::Value) -> toml::Value {
    match (existing, value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    }
}
