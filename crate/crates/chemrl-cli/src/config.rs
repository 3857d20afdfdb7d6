//! Flat `key = value` configuration with dotted section prefixes.
//!
//! Values from the config file are overridden by command-line flags. Every
//! lookup error names the offending key; validation happens before any
//! file is written.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { values })
    }

    /// Command-line values override file values.
    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError(format!("missing required key `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| ConfigError(format!("key `{key}`: cannot parse `{raw}`"))),
        }
    }

    pub fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| ConfigError(format!("key `{key}`: cannot parse `{raw}`")))
    }

    pub fn parse_bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "1" | "yes" | "on") => Ok(true),
            Some("false" | "0" | "no" | "off") => Ok(false),
            Some(other) => Err(ConfigError(format!(
                "key `{key}`: expected a boolean, got `{other}`"
            ))),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        let raw = self.require(key)?;
        let path = PathBuf::from(raw);
        if !path.exists() {
            return Err(ConfigError(format!(
                "key `{key}`: path `{raw}` does not exist"
            )));
        }
        Ok(path)
    }

    /// Comma-separated list.
    pub fn list(&self, key: &str) -> Result<Vec<String>, ConfigError> {
        let raw = self.require(key)?;
        let items: Vec<String> = raw
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(ConfigError(format!("key `{key}`: empty list")));
        }
        Ok(items)
    }

    /// Fully resolved configuration, one `key = value` line per entry.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nalgo.sigma = 60\nrun.budget = 500\n").unwrap();
        let mut cfg = Config::from_file(&path).unwrap();
        assert_eq!(cfg.parse::<f64>("algo.sigma", 0.0).unwrap(), 60.0);
        cfg.set("algo.sigma", "120".into());
        assert_eq!(cfg.parse::<f64>("algo.sigma", 0.0).unwrap(), 120.0);
        assert!(cfg.dump().contains("algo.sigma = 120"));
    }

    #[test]
    fn errors_name_the_key() {
        let cfg = Config::default();
        let err = cfg.require("task.kind").unwrap_err();
        assert!(err.0.contains("task.kind"));
        let mut cfg = Config::default();
        cfg.set("run.budget", "lots".into());
        let err = cfg.parse::<u64>("run.budget", 0).unwrap_err();
        assert!(err.0.contains("run.budget"));
    }
}
