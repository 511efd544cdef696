//! Flat `key = value` configuration text with optional `[section]` headers.
//!
//! A key `lr` under `[train]` is addressed as `train.lr`. Later assignments
//! override earlier ones, which is how command-line overrides are applied.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: i + 1,
                    reason: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: "expected key = value".into(),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: "empty key".into(),
                });
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            kv.set(&key, v.trim());
        }
        Ok(kv)
    }

    /// Parses a single `key=value` override.
    pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
        let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            reason: format!("override {s:?} is not key=value"),
        })?;
        Ok((k.trim().to_string(), v.trim().to_string()))
    }

    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string())),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `key` if present.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }

    /// Overwrites `slot` with the parsed value of `key` if present.
    pub fn read_into<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.parsed(key)? {
            *slot = v;
        }
        Ok(())
    }
}

/// Writes entries grouped by section, sections in first-seen order.
impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut sections: Vec<&str> = Vec::new();
        for (k, _) in &self.entries {
            let s = k.split_once('.').map_or("", |(s, _)| s);
            if !sections.contains(&s) {
                sections.push(s);
            }
        }
        for (i, section) in sections.iter().enumerate() {
            if !section.is_empty() {
                if i > 0 {
                    writeln!(f)?;
                }
                writeln!(f, "[{section}]")?;
            }
            for (k, v) in &self.entries {
                let (s, key) = k.split_once('.').unwrap_or(("", k));
                if s == *section {
                    writeln!(f, "{key} = {v}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let text =
            "seed = 3\n[train]\nlr = 0.01 # comment\nepochs=5\n\n[model]\narchitecture = II\n";
        let mut kv = KeyValues::parse(text).unwrap();
        assert_eq!(kv.get("train.lr"), Some("0.01"));
        assert_eq!(kv.get("model.architecture"), Some("II"));
        assert_eq!(kv.get("seed"), Some("3"));
        let (k, v) = KeyValues::parse_override("train.epochs=9").unwrap();
        kv.set(&k, &v);
        assert_eq!(kv.parsed::<usize>("train.epochs").unwrap(), Some(9));
        assert!(kv.parsed::<usize>("train.lr").is_err());

        let again = KeyValues::parse(&kv.to_string()).unwrap();
        assert_eq!(again, kv);
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(
            KeyValues::parse("[train\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            KeyValues::parse("a = 1\njunk\n"),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
    }
}
