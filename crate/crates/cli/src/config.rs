//! Run configuration: a TOML file with top-level run settings and one
//! `[[experiment]]` table per experiment.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use helitorus::experiments::Experiment;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; all available cores when absent
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_true")]
    pub csv: bool,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiments.is_empty() {
            return Err(ConfigError::Invalid("experiment: the config lists no experiments".into()));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers: must be at least 1".into()));
        }
        let mut names = BTreeSet::new();
        for (i, exp) in self.experiments.iter().enumerate() {
            exp.validate()
                .map_err(|issue| ConfigError::Invalid(format!("experiment[{i}] ({}).{issue}", exp.kind())))?;
            if !names.insert(exp.name()) {
                return Err(ConfigError::Invalid(format!(
                    "experiment[{i}].label: duplicate report name {:?}; give each experiment a distinct label",
                    exp.name()
                )));
            }
        }
        Ok(())
    }

    /// Rejects `--tol` names that no configured experiment knows.
    pub fn check_overrides(&self, overrides: &BTreeMap<String, f64>) -> Result<(), ConfigError> {
        let known: BTreeSet<String> = self.experiments.iter().flat_map(|e| e.default_tolerances().into_keys()).collect();
        for name in overrides.keys() {
            if !known.contains(name) {
                let list: Vec<&str> = known.iter().map(String::as_str).collect();
                return Err(ConfigError::Invalid(format!(
                    "--tol {name}: no configured experiment has this tolerance (known: {})",
                    list.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Parses `name=value`.
pub fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(format!("empty tolerance name in {s:?}"));
    }
    let v: f64 = value.trim().parse().map_err(|_| format!("tolerance {name}: {value:?} is not a number"))?;
    if !(v >= 0.0) {
        return Err(format!("tolerance {name}: must be a non-negative number, got {v}"));
    }
    Ok((name.to_string(), v))
}
