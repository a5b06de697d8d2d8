//! Layered configuration: defaults, then a JSON file, then `--set key=value`.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Merge `patch` into `base`. Objects merge key by key; anything else
/// replaces. Keys absent from `base` are rejected so typos surface.
pub fn merge(base: &mut Value, patch: Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(CliError::Usage(format!("unknown config key `{here}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Apply one `a.b.c=value` override. The value is read as JSON when it
/// parses, otherwise as a string.
pub fn set(base: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = &mut *base;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::Usage(format!("unknown config key `{key}`")))?;
    }
    *slot = value;
    Ok(())
}

/// Resolve a config from its defaults, an optional JSON file and overrides.
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&std::path::Path>,
    overrides: &[String],
) -> Result<T, CliError> {
    let mut value = serde_json::to_value(defaults).map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let patch: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        merge(&mut value, patch, "")?;
    }
    for o in overrides {
        set(&mut value, o)?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}
