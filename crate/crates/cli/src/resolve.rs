//! Turns presets, config files and command-line overrides into one
//! validated `ExperimentConfig`.

use std::path::Path;

use leadfollow::config::ExperimentConfig;
use toml::Value;

use crate::CliError;

/// Starting point of a run before overrides.
pub enum Source<'a> {
    Preset(&'a str),
    File(&'a Path),
}

/// A loaded base config, plus the scheme recorded in a manifest if any.
pub struct Base {
    pub tree: Value,
    pub scheme: Option<String>,
}

pub fn load(source: Source<'_>) -> Result<Base, CliError> {
    match source {
        Source::Preset(name) => {
            let cfg = ExperimentConfig::from_preset(name).map_err(CliError::Config)?;
            Ok(Base {
                tree: Value::try_from(&cfg).map_err(|e| CliError::Internal(e.to_string()))?,
                scheme: None,
            })
        }
        Source::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let is_json =
                path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
            if is_json {
                from_json(&text)
            } else {
                let tree: Value = toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                Ok(Base { tree, scheme: None })
            }
        }
    }
}

/// Accepts either a bare config object or a manifest with a `config` field.
fn from_json(text: &str) -> Result<Base, CliError> {
    let json: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("bad JSON: {e}")))?;
    let scheme = json
        .get("scheme")
        .and_then(|s| s.as_str())
        .map(str::to_string);
    let config = json.get("config").cloned().unwrap_or(json);
    let tree = Value::try_from(strip_nulls(config))
        .map_err(|e| CliError::Usage(format!("config is not a table: {e}")))?;
    Ok(Base { tree, scheme })
}

fn strip_nulls(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => serde_json::Value::Object(
            map.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        serde_json::Value::Array(items) => {
            serde_json::Value::Array(items.into_iter().map(strip_nulls).collect())
        }
        other => other,
    }
}

/// Parses the right-hand side of `--set key=value` as a TOML value, falling
/// back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets a dotted key, creating intermediate tables.
pub fn set(tree: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad key `{key}`")));
    }
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            CliError::Usage(format!(
                "cannot set `{key}`: `{}` is not a table",
                parts[..i].join(".")
            ))
        })?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Default::default()));
    }
    unreachable!("key has at least one part")
}

pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected key=value, got `{assignment}`")))?;
    set(tree, key.trim(), parse_value(raw.trim()))
}

/// Deserializes and validates; errors name the offending key.
pub fn finish(tree: Value) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(leadfollow::Error::InvalidConfig {
            key: path,
            reason: e
                .into_inner()
                .to_string()
                .lines()
                .next()
                .unwrap_or("")
                .to_string(),
        })
    })?;
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_as_toml_or_string() {
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("12"), Value::Integer(12));
        assert_eq!(parse_value("quota"), Value::String("quota".into()));
        assert_eq!(
            parse_value("[1, 2]"),
            Value::Array(vec![Value::Integer(1), Value::Integer(2)])
        );
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut tree = load(Source::Preset("test-ia")).unwrap().tree;
        apply_override(&mut tree, "macro.domain.n_cells=160").unwrap();
        apply_override(&mut tree, "micro.sampling=quota").unwrap();
        let cfg = finish(tree).unwrap();
        assert_eq!(cfg.macro_cfg.domain.n_cells, 160);
        assert_eq!(cfg.micro.sampling, leadfollow::micro_sim::Sampling::Quota);
    }

    #[test]
    fn type_errors_name_the_key() {
        let mut tree = load(Source::Preset("test-ia")).unwrap().tree;
        apply_override(&mut tree, "macro.dt=fast").unwrap();
        match finish(tree) {
            Err(CliError::Config(leadfollow::Error::InvalidConfig { key, .. })) => {
                assert_eq!(key, "macro.dt")
            }
            _ => panic!("expected a config error"),
        }
    }
}
