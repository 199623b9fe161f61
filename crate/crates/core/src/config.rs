//! Plain-text `key = value` files with `[section]` headers.
//!
//! ```text
//! # comment
//! seed = 7
//! [device]
//! kind = sinh
//! k = 7.5
//! ```
//!
//! Keys before the first header belong to the unnamed root section `""`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Section = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, Section>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated header", n + 1)))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(String::as_str)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(root) = self.sections.get("") {
            for (k, v) in root {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        for (name, sec) in self.sections.iter().filter(|(n, _)| !n.is_empty()) {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in sec {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

pub(crate) fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: `{v}` is not a number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = ConfigFile::parse("# top\nseed = 7\n\n[device]\nkind = sinh\n k =7.5 \n").unwrap();
        assert_eq!(cfg.get("", "seed"), Some("7"));
        assert_eq!(cfg.get("device", "kind"), Some("sinh"));
        assert_eq!(cfg.get("device", "k"), Some("7.5"));
        assert_eq!(ConfigFile::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn rejects_garbage() {
        assert!(ConfigFile::parse("[device\n").is_err());
        assert!(ConfigFile::parse("no equals sign\n").is_err());
        assert!(ConfigFile::parse(" = 3\n").is_err());
        assert!(parse_f64("b", "four").is_err());
    }
}
