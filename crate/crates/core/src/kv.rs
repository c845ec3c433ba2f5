//! `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, keys are unique. Typed
//! lookups consume keys so that leftovers can be reported as unknown.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}", ln + 1), "expected `key = value`"))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::parse(format!("line {}", ln + 1), format!("duplicate key `{k}`")));
            }
        }
        Ok(KvFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}:{location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &KvFile) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Removes every `prefix.key` entry and returns them as `key`.
    pub fn section(&mut self, prefix: &str) -> KvFile {
        let head = format!("{prefix}.");
        let keys: Vec<String> = self.entries.keys().filter(|k| k.starts_with(&head)).cloned().collect();
        let mut out = KvFile::default();
        for k in keys {
            let v = self.entries.remove(&k).unwrap();
            out.entries.insert(k[head.len()..].to_string(), v);
        }
        out
    }

    /// Adds every entry of `other` under `prefix.`.
    pub fn nest(&mut self, prefix: &str, other: &KvFile) {
        for (k, v) in &other.entries {
            self.entries.insert(format!("{prefix}.{k}"), v.clone());
        }
    }

    /// Removes and parses `key` if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::parse(format!("key `{key}`"), format!("`{v}`: {e}"))),
        }
    }

    /// Assigns `*slot` from `key` when present.
    pub fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Errors if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some(k) = self.entries.keys().next() {
            return Err(Error::InvalidArgument(format!("unknown configuration key `{k}`")));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Comma-separated layer widths, as in `hidden = 256,256`.
pub fn parse_widths(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse("key `hidden`", format!("`{text}`: {e}")))
}

pub fn join_widths(widths: &[usize]) -> String {
    widths.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_split_and_nest() {
        let mut kv = KvFile::parse("train.steps = 10\ntrain.gamma = 0.9\ngen.seed = 3\nseed = 1\n").unwrap();
        let train = kv.section("train");
        assert_eq!(train.to_text(), "gamma = 0.9\nsteps = 10\n");
        assert_eq!(kv.to_text(), "gen.seed = 3\nseed = 1\n");
        let mut back = KvFile::default();
        back.nest("train", &train);
        assert_eq!(back.to_text(), "train.gamma = 0.9\ntrain.steps = 10\n");
    }

    #[test]
    fn parse_and_take() {
        let mut kv = KvFile::parse("# run\nseed = 7\nlr=3e-4 # actor\n\nname = x y\n").unwrap();
        assert_eq!(kv.take::<u64>("seed").unwrap(), Some(7));
        let mut lr = 0.0f32;
        kv.take_into("lr", &mut lr).unwrap();
        assert_eq!(lr, 3e-4);
        assert_eq!(kv.take::<String>("name").unwrap().as_deref(), Some("x y"));
        assert_eq!(kv.take::<u64>("absent").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn errors() {
        assert!(KvFile::parse("a = 1\na = 2").is_err());
        assert!(KvFile::parse("novalue").is_err());
        let mut kv = KvFile::parse("a = x").unwrap();
        assert!(kv.take::<f64>("a").is_err());
        assert!(KvFile::parse("b = 1").unwrap().finish().is_err());
    }

    #[test]
    fn merge_overrides() {
        let mut a = KvFile::parse("x = 1\ny = 2").unwrap();
        a.merge(&KvFile::parse("y = 3").unwrap());
        assert_eq!(a.to_text(), "x = 1\ny = 3\n");
    }
}
