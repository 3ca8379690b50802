//! Expands one base configuration into a list of configurations.

use std::path::Path;

use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// One varied key: a dotted path into the config and its alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub path: Vec<String>,
    pub values: Vec<Value>,
}

impl std::str::FromStr for Variation {
    type Err = CliError;

    /// `a.b.c=[v1, v2, …]`, the right-hand side being a JSON array.
    fn from_str(s: &str) -> Result<Self> {
        let (path, values) =
            s.split_once('=').ok_or_else(|| CliError::Other(format!("variation `{s}` lacks `=`")))?;
        let values: Vec<Value> = serde_json::from_str(values)
            .map_err(|e| CliError::Other(format!("variation `{path}`: values must be a JSON array ({e})")))?;
        if values.is_empty() {
            return Err(CliError::Other(format!("variation `{path}` has no values")));
        }
        Ok(Variation { path: path.split('.').map(String::from).collect(), values })
    }
}

fn set(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut node = root;
    for key in &path[..path.len() - 1] {
        node = match node {
            Value::Object(map) => map.entry(key.clone()).or_insert_with(|| Value::Object(Default::default())),
            Value::Array(items) => key
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| CliError::Other(format!("no element `{key}` in {}", path.join("."))))?,
            _ => return Err(CliError::Other(format!("`{}` does not name an object field", path.join(".")))),
        };
    }
    match node {
        Value::Object(map) => {
            map.insert(path[path.len() - 1].clone(), value);
            Ok(())
        }
        _ => Err(CliError::Other(format!("`{}` does not name an object field", path.join(".")))),
    }
}

/// Cartesian product of the variations over `base`; run `k` writes to
/// `out_root/run_{k:03}`. Every generated config is validated.
pub fn expand(base: &ExperimentConfig, variations: &[Variation], out_root: &Path) -> Result<Vec<ExperimentConfig>> {
    let mut configs = vec![serde_json::to_value(base)?];
    for var in variations {
        let mut next = Vec::with_capacity(configs.len() * var.values.len());
        for c in &configs {
            for v in &var.values {
                let mut c = c.clone();
                set(&mut c, &var.path, v.clone())?;
                next.push(c);
            }
        }
        configs = next;
    }
    let mut out = Vec::with_capacity(configs.len());
    let mut problems = Vec::new();
    for (k, value) in configs.into_iter().enumerate() {
        let mut config: ExperimentConfig = match serde_json::from_value(value) {
            Ok(c) => c,
            Err(e) => {
                problems.push(format!("run {k}: {e}"));
                continue;
            }
        };
        config.out_dir = Some(out_root.join(format!("run_{k:03}")));
        if let Err(CliError::Validation(v)) = config.validate() {
            problems.extend(v.into_iter().map(|m| format!("run {k}: {m}")));
        }
        out.push(config);
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Validation(problems))
    }
}

/// Writes `config_{k:03}.json` per configuration and returns the paths.
pub fn write_configs(configs: &[ExperimentConfig], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    configs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let path = dir.join(format!("config_{k:03}.json"));
            std::fs::write(&path, c.to_json() + "\n").map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_dotted_paths() {
        let v: Variation = "integration.h=[0.1, 0.05]".parse().unwrap();
        assert_eq!(v.path, vec!["integration", "h"]);
        assert_eq!(v.values, vec![json!(0.1), json!(0.05)]);
        assert!("a=[]".parse::<Variation>().is_err());
    }

    #[test]
    fn set_creates_objects_and_indexes_arrays() {
        let mut root = json!({ "arch": { "widths": [3, 1] } });
        set(&mut root, &["arch".into(), "widths".into(), "0".into()], json!(7)).unwrap_err();
        set(&mut root, &["diversity".into(), "probes".into()], json!(4)).unwrap();
        assert_eq!(root["diversity"]["probes"], 4);
        let mut root = json!({ "schedules": [{ "kind": "constant", "value": 1.0 }] });
        set(&mut root, &["schedules".into(), "0".into(), "value".into()], json!(2.0)).unwrap();
        assert_eq!(root["schedules"][0]["value"], 2.0);
        assert!(set(&mut root, &["schedules".into(), "5".into(), "value".into()], json!(2.0)).is_err());
    }
}
