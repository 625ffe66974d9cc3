//! Flat `key = value` configuration files.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Every key any command understands.
pub const KNOWN_KEYS: &[&str] = &[
    "adaptive",
    "alpha_floor",
    "c",
    "d",
    "diag_max_level",
    "diag_min_level",
    "epsilons",
    "gamma",
    "K",
    "m_diag",
    "m_min",
    "max_iterations",
    "max_level",
    "n0",
    "params_mode",
    "phi",
    "pilot_m",
    "pilot_samples",
    "problem",
    "r",
    "rho",
    "scheme",
    "seed",
    "sigma",
    "sigma_mode",
    "sigmas",
    "start_level",
    "sweep_epsilons",
    "target_p",
    "theory_alpha",
    "theory_beta",
    "theory_gamma",
    "theta",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", i + 1)));
            }
            if value.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty value for {key}", i + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key {key}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KNOWN_KEYS.contains(&key));
        self.values.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::Usage(format!("invalid value {v:?} for {key}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse::<T>()
                            .map_err(|_| CliError::Usage(format!("invalid list item {item:?} for {key}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn flag(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => parse_switch(v).ok_or_else(|| CliError::Usage(format!("{key} must be on or off, got {v:?}"))),
        }
    }

    pub fn keys(&self) -> BTreeSet<&str> {
        self.values.keys().map(String::as_str).collect()
    }
}

pub fn parse_switch(v: &str) -> Option<bool> {
    match v {
        "on" | "true" | "1" => Some(true),
        "off" | "false" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let cfg = RawConfig::parse("# header\nseed = 7\nepsilons = 1e-2, 5e-3 # two\n\nadaptive=on\n").unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.list::<f64>("epsilons").unwrap(), Some(vec![1e-2, 5e-3]));
        assert!(cfg.flag("adaptive", false).unwrap());
        assert_eq!(cfg.get::<f64>("phi").unwrap(), None);
    }

    #[test]
    fn rejects_bad_lines_with_line_numbers() {
        let err = RawConfig::parse("seed = 1\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(RawConfig::parse("colour = red").is_err());
        assert!(RawConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(RawConfig::parse("seed =").is_err());
        let cfg = RawConfig::parse("seed = x").unwrap();
        assert!(matches!(cfg.get::<u64>("seed"), Err(CliError::Usage(_))));
    }
}
