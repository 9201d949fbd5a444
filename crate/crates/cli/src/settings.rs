//! Config files and flag/file merging.
//!
//! A config file is either plain `key = value` lines (`#` starts a comment)
//! or a JSON run manifest, whose `config` object is read the same way.
//! Keys use the flag names with `-` replaced by `_`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Subcommand recorded in a JSON manifest.
    command: Option<String>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Settings::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Settings> {
        if text.trim_start().starts_with('{') {
            let doc: Value = serde_json::from_str(text)?;
            let obj = doc
                .get("config")
                .unwrap_or(&doc)
                .as_object()
                .ok_or_else(|| anyhow!("JSON config must be an object"))?;
            let values = obj.iter().map(|(k, v)| (normalize(k), value_to_string(v))).collect();
            let command = doc.get("command").and_then(Value::as_str).map(str::to_string);
            return Ok(Settings { values, command });
        }
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            values.insert(normalize(k.trim()), v.trim().to_string());
        }
        Ok(Settings { values, command: None })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag if given, else the file value, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(s) => s.parse().map_err(|e| anyhow!("config key {key}: cannot parse {s:?}: {e}")),
            None => Ok(default),
        }
    }

    /// Like [`Settings::pick`] for values with a custom parser.
    pub fn pick_with<T>(&self, flag: Option<&str>, key: &str, default: T, parse: impl Fn(&str) -> Result<T>) -> Result<T> {
        match flag.or_else(|| self.get(key)) {
            Some(s) => parse(s).with_context(|| format!("option {key}")),
            None => Ok(default),
        }
    }

    pub fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.get(key) {
            Some(s) => s.parse().map_err(|_| anyhow!("config key {key}: expected true or false, got {s:?}")),
            None => Ok(false),
        }
    }

    /// Errors when the file is a manifest written by a different subcommand.
    pub fn check_command(&self, command: &str) -> Result<()> {
        match &self.command {
            Some(c) if c != command => bail!("config was written by `{c}`, not `{command}`"),
            _ => Ok(()),
        }
    }

    /// Errors on keys no command option consumes, to catch typos.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        let unknown: Vec<&str> = self.values.keys().map(String::as_str).filter(|k| !known.contains(k)).collect();
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        Ok(())
    }
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

fn value_to_string(v: &Value) -> String {
    match v {
        Value::Null => "none".into(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(value_to_string).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// Comma-separated list; empty input gives an empty list.
pub fn parse_list<T>(s: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| anyhow!("cannot parse {p:?}: {e}")))
        .collect()
}

/// A real number, or `none` for absent.
pub fn parse_optional_f64(s: &str) -> Result<Option<f64>> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("none") || t.is_empty() {
        return Ok(None);
    }
    let v: f64 = t.parse().map_err(|_| anyhow!("expected a number or `none`, got {t:?}"))?;
    if !v.is_finite() {
        bail!("expected a finite number, got {t:?}");
    }
    Ok(Some(v))
}
