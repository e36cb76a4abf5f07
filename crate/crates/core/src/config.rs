//! Flat `section.key = value` configuration text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        KeyValues::default()
    }

    /// One `section.key = value` per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'section.key = value'", ln + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !k.contains('.') || k.starts_with('.') || k.ends_with('.') || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: key '{k}' must look like section.key", ln + 1)));
            }
            if kv.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", ln + 1)));
            }
        }
        Ok(kv)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Entries of `other` win.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("'{key}': cannot parse '{v}'"))),
        }
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
    }

    /// Sorted, one entry per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}

/// Assigns `key` into `slot` when present.
pub fn read_into<T: FromStr>(kv: &KeyValues, key: &str, slot: &mut T) -> Result<()> {
    if let Some(v) = kv.typed::<T>(key)? {
        *slot = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_merge_and_render() {
        let mut a = KeyValues::parse("# c\nrun.seeds = 5\n\ngnn.hidden=8\n").unwrap();
        let b = KeyValues::parse("run.seeds = 2").unwrap();
        a.merge(&b);
        assert_eq!(a.to_text(), "gnn.hidden = 8\nrun.seeds = 2\n");
        assert_eq!(a.typed::<usize>("gnn.hidden").unwrap(), Some(8));
        assert!(a.typed::<usize>("gnn.missing").unwrap().is_none());
        assert!(KeyValues::parse("nokey = 1").is_err());
        assert!(KeyValues::parse("a.b = 1\na.b = 2").is_err());
        assert!(KeyValues::parse("just text").is_err());
        assert!(KeyValues::parse("a.b = x").unwrap().typed::<f64>("a.b").is_err());
    }
}
