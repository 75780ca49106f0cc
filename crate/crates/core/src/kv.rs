//! Plain-text `key = value` files. `#` starts a comment; blank lines are
//! ignored; keys may repeat (callers decide whether that is allowed).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse_value(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    /// Whitespace-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))?;
        v.split_whitespace()
            .map(|x| {
                x.parse()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{x}`")))
            })
            .collect()
    }

    /// Fails on any key outside `known` or any repeated key.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (k, _) in &self.entries {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            if !seen.insert(k.as_str()) {
                return Err(Error::Config(format!("duplicate key `{k}`")));
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
