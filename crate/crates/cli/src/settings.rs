//! Key-value run settings: built-in defaults, then the config file, then
//! `--set` pairs, then dedicated flags. Later sources win; keys the command
//! does not know are rejected.

use mflow::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("{origin}:{}: expected `key = value`, got `{line}`", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::config(format!("{origin}:{}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    parse_kv(&text, &path.display().to_string())
}

/// `key=value` from the command line.
pub fn parse_pair(s: &str) -> Result<(String, String)> {
    let mut pairs = parse_kv(s, "--set")?;
    match pairs.len() {
        1 => Ok(pairs.remove(0)),
        _ => Err(Error::config(format!("--set expects key=value, got `{s}`"))),
    }
}

impl Settings {
    pub fn with_defaults(defaults: &[(&str, String)]) -> Self {
        Self {
            values: defaults.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    /// Overrides known keys; an unknown key is a validation error.
    pub fn apply(&mut self, pairs: &[(String, String)], origin: &str) -> Result<()> {
        for (k, v) in pairs {
            match self.values.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => {
                    let known: Vec<&str> = self.values.keys().map(String::as_str).collect();
                    return Err(Error::config(format!(
                        "unknown key `{k}` in {origin} (known: {})",
                        known.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared key `{key}`"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.str(key);
        v.parse().map_err(|e| Error::config(format!("{key} = `{v}`: {e}")))
    }

    /// `none` (or an empty value) maps to `None`.
    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.str(key) {
            "" | "none" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    /// Comma-separated list; empty entries are rejected.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.str(key);
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|p| {
                let p = p.trim();
                p.parse().map_err(|e| Error::config(format!("{key} entry `{p}`: {e}")))
            })
            .collect()
    }

    /// A path that must be given.
    pub fn required(&self, key: &str) -> Result<&str> {
        match self.str(key) {
            "" => Err(Error::config(format!("`{key}` is required"))),
            v => Ok(v),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.values
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
        )
    }

    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("  {k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blanks_and_spaces() {
        let kv = parse_kv("# header\n\n a = 1 \nb=x # trailing\n", "t").unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "x".into())]);
        assert!(parse_kv("novalue\n", "t").is_err());
        assert!(parse_kv(" = 3\n", "t").is_err());
    }

    #[test]
    fn later_sources_win_and_unknown_keys_fail() {
        let mut s = Settings::with_defaults(&[("lr", "1".into()), ("steps", "5".into())]);
        s.apply(&[("lr".into(), "2".into())], "file").unwrap();
        s.apply(&[("lr".into(), "3".into())], "flags").unwrap();
        assert_eq!(s.get::<f64>("lr").unwrap(), 3.0);
        let e = s.apply(&[("lrr".into(), "3".into())], "file").unwrap_err();
        assert!(e.is_validation());
    }

    #[test]
    fn lists_and_optionals() {
        let s = Settings::with_defaults(&[("ks", "1, 2,4".into()), ("ema", "none".into()), ("bad", "1,x".into())]);
        assert_eq!(s.list::<usize>("ks").unwrap(), vec![1, 2, 4]);
        assert_eq!(s.optional::<f64>("ema").unwrap(), None);
        assert!(s.list::<usize>("bad").is_err());
    }
}
