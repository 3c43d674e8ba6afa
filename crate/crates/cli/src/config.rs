//! `key=value` parameter files. Command-line flags win over file values,
//! file values win over built-in defaults.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use sots::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: HashMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", no + 1)))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    /// Fill the gaps of `self` from `other`.
    pub fn fallback(mut self, other: &Config) -> Self {
        for (k, v) in &other.values {
            self.values.entry(k.clone()).or_insert_with(|| v.clone());
        }
        self
    }

    pub fn lookup<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse().map_err(|e| Error::Config(format!("{key}={v}: {e}"))))
            .transpose()
    }

    pub fn pick<T: FromStr>(&self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick_opt(cli, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.lookup(key),
        }
    }

    pub fn require<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.pick_opt(cli, key)?
            .ok_or_else(|| Error::Argument(format!("missing required parameter --{key}")))
    }
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| Error::Argument(format!("{s:?}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let cfg = Config::parse("# comment\nn = 64\nq=8 # trailing\n").unwrap();
        assert_eq!(cfg.pick(None, "n", 1usize).unwrap(), 64);
        assert_eq!(cfg.pick(Some(32usize), "n", 1).unwrap(), 32);
        assert_eq!(cfg.pick(None, "m", 7usize).unwrap(), 7);
        assert!(cfg.require::<usize>(None, "m").is_err());
        assert!(cfg.lookup::<f64>("q").unwrap().is_some());
        assert!(Config::parse("novalue").is_err());
        assert!(Config::parse("n=x").unwrap().lookup::<usize>("n").is_err());
    }

    #[test]
    fn fallback_keeps_primary() {
        let a = Config::parse("n=1").unwrap().fallback(&Config::parse("n=2\nm=3").unwrap());
        assert_eq!(a.lookup::<usize>("n").unwrap(), Some(1));
        assert_eq!(a.lookup::<usize>("m").unwrap(), Some(3));
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("0.25, 0.5,1").unwrap(), vec![0.25, 0.5, 1.0]);
        assert!(parse_list::<usize>("1,x").is_err());
    }
}
