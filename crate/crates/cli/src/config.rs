//! Minimal INI-style scenario files.
//!
//! Grammar, one construct per line:
//!
//! ```text
//! # comment            (also after a value: `step = 1e-3  # seconds`)
//! [section]
//! key = value
//! ```
//!
//! Keys before the first section header belong to the section `""`.
//! Section and key names are case-sensitive; repeating a key in one section
//! is an error. Lists are comma-separated (`state = 1.0, 0.0`).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    source: String,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{source}:{}", lineno + 1);
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Config(format!("{}: unterminated section header", at())))?
                    .trim();
                if name.is_empty() {
                    return Err(CliError::Config(format!("{}: empty section name", at())));
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{}: expected `key = value`", at())))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("{}: empty key", at())));
            }
            let entries = sections.entry(current.clone()).or_default();
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "{}: key `{key}` repeated in section [{current}]",
                    at()
                )));
            }
        }
        Ok(Self {
            sections,
            source: source.to_string(),
        })
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn require_str(&self, section: &str, key: &str) -> Result<&str, CliError> {
        self.get_str(section, key).ok_or_else(|| {
            CliError::Config(format!(
                "{}: missing key `{key}` in section [{section}]",
                self.source
            ))
        })
    }

    fn convert<T: FromStr>(&self, section: &str, key: &str, raw: &str) -> Result<T, CliError> {
        raw.parse().map_err(|_| {
            CliError::Config(format!(
                "{}: cannot parse [{section}] {key} = `{raw}`",
                self.source
            ))
        })
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError> {
        self.get_str(section, key)
            .map(|raw| self.convert(section, key, raw))
            .transpose()
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T, CliError> {
        let raw = self.require_str(section, key)?;
        self.convert(section, key, raw)
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require_list(&self, section: &str, key: &str) -> Result<Vec<f64>, CliError> {
        self.require_str(section, key)?
            .split(',')
            .map(|item| self.convert(section, key, item.trim()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_keys_and_comments() {
        let cfg = Config::parse(
            "top = 1\n# comment\n[model]\nkind = msd  # trailing\nm = 2.5\n\n[initial]\nstate = 1, -0.5\n",
            "test",
        )
        .unwrap();
        assert_eq!(cfg.get_str("", "top"), Some("1"));
        assert_eq!(cfg.require_str("model", "kind").unwrap(), "msd");
        assert_eq!(cfg.require::<f64>("model", "m").unwrap(), 2.5);
        assert_eq!(cfg.require_list("initial", "state").unwrap(), vec![1.0, -0.5]);
        assert_eq!(cfg.get_or("model", "k", 7.0).unwrap(), 7.0);
    }

    #[test]
    fn missing_key_is_named() {
        let cfg = Config::parse("[model]\n", "x.cfg").unwrap();
        let err = cfg.require_str("model", "kind").unwrap_err().to_string();
        assert!(err.contains("`kind`") && err.contains("[model]"), "{err}");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(Config::parse("[model\n", "x").is_err());
        assert!(Config::parse("just words\n", "x").is_err());
        assert!(Config::parse("[a]\nk = 1\nk = 2\n", "x").is_err());
        let cfg = Config::parse("[a]\nk = one\n", "x").unwrap();
        assert!(cfg.require::<f64>("a", "k").is_err());
    }
}
