//! Config files: JSON objects, flat `key=value` files (dotted keys address
//! nested sections), or a run manifest whose resolved config is reused.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::UsageError;

/// A loaded config document.
#[derive(Debug, Clone, Default)]
pub struct ConfigDoc {
    pub values: Map<String, Value>,
    /// Command recorded in the manifest, when the file is one.
    pub manifest_command: Option<String>,
    /// Directory holding the file, used to resolve manifest outputs.
    pub base_dir: Option<PathBuf>,
}

impl ConfigDoc {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut doc = parse(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        doc.base_dir = path.parent().map(Path::to_path_buf);
        Ok(doc)
    }

    /// Sets `key` (dotted for nested sections) to `value`.
    pub fn set(&mut self, key: &str, value: Value) {
        insert_dotted(&mut self.values, key, value);
    }

    /// Sets `key` from its textual form, as a JSON literal when it parses as
    /// one and a string otherwise.
    pub fn set_text(&mut self, key: &str, text: &str) {
        self.set(key, literal(text));
    }

    pub fn resolve<T: DeserializeOwned>(&self) -> Result<T, UsageError> {
        serde_json::from_value(Value::Object(self.values.clone()))
            .map_err(|e| UsageError(format!("invalid config: {e}")))
    }

    /// Fails unless the document is a manifest for one of `accepted`, or not a
    /// manifest at all.
    pub fn expect_command(&self, accepted: &[&str]) -> Result<(), UsageError> {
        match &self.manifest_command {
            Some(c) if !accepted.contains(&c.as_str()) => Err(UsageError(format!(
                "manifest was written by `{c}`, not `{}`",
                accepted[0]
            ))),
            _ => Ok(()),
        }
    }
}

/// Parses a config document from text.
pub fn parse(text: &str) -> Result<ConfigDoc, String> {
    if text.trim_start().starts_with('{') {
        let value: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let Value::Object(mut obj) = value else {
            unreachable!("document starts with an object");
        };
        if obj.contains_key("command") && obj.contains_key("config") {
            let command = obj
                .get("command")
                .and_then(Value::as_str)
                .ok_or("manifest command must be a string")?
                .to_string();
            let Some(Value::Object(values)) = obj.remove("config") else {
                return Err("manifest config must be an object".into());
            };
            return Ok(ConfigDoc {
                values,
                manifest_command: Some(command),
                base_dir: None,
            });
        }
        return Ok(ConfigDoc {
            values: obj,
            ..Default::default()
        });
    }
    let mut doc = ConfigDoc::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        doc.set_text(key, value.trim());
    }
    Ok(doc)
}

fn literal(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn insert_dotted(map: &mut Map<String, Value>, key: &str, value: Value) {
    match key.split_once('.') {
        None => {
            map.insert(key.to_string(), value);
        }
        Some((head, rest)) => {
            let entry = map
                .entry(head.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            if !entry.is_object() {
                *entry = Value::Object(Map::new());
            }
            insert_dotted(entry.as_object_mut().expect("object"), rest, value);
        }
    }
}
