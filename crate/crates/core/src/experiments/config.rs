//! Experiment configuration files.
//!
//! ```text
//! # comments start with '#'
//! experiment = ex4_missing_data
//! seed = 20240611
//! reps = 2000
//! sizes = 10000, 20000
//!
//! [params]
//! kappa = 0.2
//! ```
//!
//! Keys before any section header (or under `[run]`) configure the run;
//! keys under `[params]` are experiment parameters. A value is a number,
//! a comma-separated list of numbers, or a bare word.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Number(f64),
    List(Vec<f64>),
    Text(String),
}

impl ParamValue {
    pub(crate) fn parse(raw: &str) -> ParamValue {
        if raw.contains(',') {
            let parsed: std::result::Result<Vec<f64>, _> =
                raw.split(',').map(|t| t.trim().parse::<f64>()).collect();
            if let Ok(v) = parsed {
                return ParamValue::List(v);
            }
        }
        match raw.parse::<f64>() {
            Ok(x) => ParamValue::Number(x),
            Err(_) => ParamValue::Text(raw.to_string()),
        }
    }
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Number(x) => write!(f, "{x}"),
            ParamValue::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(", "))
            }
            ParamValue::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub master_seed: u64,
    pub reps: usize,
    pub size_grid: Vec<usize>,
    pub params: BTreeMap<String, ParamValue>,
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> LabError {
    LabError::Config(format!("line {line}: {msg}"))
}

fn parse_count(line: usize, key: &str, raw: &str) -> Result<u64> {
    raw.trim()
        .replace('_', "")
        .parse::<u64>()
        .or_else(|_| {
            // Allow 1e4-style integers.
            raw.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.fract() == 0.0 && *x >= 0.0 && *x < 1.8e19)
                .map(|x| x as u64)
                .ok_or(())
        })
        .map_err(|_| config_err(line, format!("{key} must be a nonnegative integer, got '{raw}'")))
}

impl ExperimentConfig {
    pub fn new(experiment_id: &str, master_seed: u64, reps: usize, size_grid: Vec<usize>) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            master_seed,
            reps,
            size_grid,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: ParamValue) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::from("run");
        let mut id = None;
        let mut seed = None;
        let mut reps = None;
        let mut sizes = None;
        let mut params = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) else {
                    return Err(config_err(line_no, "malformed section header"));
                };
                let name = name.trim();
                if name != "run" && name != "params" {
                    return Err(config_err(line_no, format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_err(line_no, "expected 'key = value'"));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(config_err(line_no, "empty key or value"));
            }
            if section == "params" {
                if params.insert(key.to_string(), ParamValue::parse(value)).is_some() {
                    return Err(config_err(line_no, format!("duplicate parameter '{key}'")));
                }
                continue;
            }
            let dup = match key {
                "experiment" => id.replace(value.to_string()).is_some(),
                "seed" => seed.replace(parse_count(line_no, key, value)?).is_some(),
                "reps" => reps.replace(parse_count(line_no, key, value)? as usize).is_some(),
                "sizes" => {
                    let v = value
                        .split(',')
                        .map(|t| parse_count(line_no, key, t).map(|x| x as usize))
                        .collect::<Result<Vec<_>>>()?;
                    sizes.replace(v).is_some()
                }
                other => return Err(config_err(line_no, format!("unknown run key '{other}'"))),
            };
            if dup {
                return Err(config_err(line_no, format!("duplicate key '{key}'")));
            }
        }
        let cfg = Self {
            experiment_id: id.ok_or_else(|| LabError::Config("missing 'experiment'".into()))?,
            master_seed: seed.ok_or_else(|| LabError::Config("missing 'seed'".into()))?,
            reps: reps.ok_or_else(|| LabError::Config("missing 'reps'".into()))?,
            size_grid: sizes.ok_or_else(|| LabError::Config("missing 'sizes'".into()))?,
            params,
        };
        cfg.validate_shape()?;
        Ok(cfg)
    }

    /// Replaces the seed with `LAB_SEED` when that variable is set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var("LAB_SEED") {
            self.master_seed = raw
                .trim()
                .parse()
                .map_err(|_| LabError::Config(format!("LAB_SEED must be an unsigned integer, got '{raw}'")))?;
        }
        Ok(())
    }

    pub(crate) fn validate_shape(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(LabError::Config("reps must be at least 1".into()));
        }
        if self.size_grid.is_empty() {
            return Err(LabError::Config("sizes must list at least one n".into()));
        }
        if self.size_grid.iter().any(|&n| n == 0) {
            return Err(LabError::Config("sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn number(&self, key: &str, default: f64) -> Result<f64> {
        match self.params.get(key) {
            None => Ok(default),
            Some(ParamValue::Number(x)) => Ok(*x),
            Some(other) => Err(LabError::Config(format!("parameter '{key}' must be a number, got '{other}'"))),
        }
    }

    pub fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.params.get(key) {
            None => Ok(default.to_vec()),
            Some(ParamValue::Number(x)) => Ok(vec![*x]),
            Some(ParamValue::List(v)) => Ok(v.clone()),
            Some(other) => Err(LabError::Config(format!("parameter '{key}' must be numeric, got '{other}'"))),
        }
    }

    pub fn text(&self, key: &str, default: &str) -> Result<String> {
        match self.params.get(key) {
            None => Ok(default.to_string()),
            Some(ParamValue::Text(s)) => Ok(s.clone()),
            Some(other) => Err(LabError::Config(format!("parameter '{key}' must be a word, got '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_lists() {
        let cfg = ExperimentConfig::parse(
            "experiment = ex2_white_noise\nseed=7 # trailing\nreps = 1e2\nsizes = 1000, 2000\n\n[params]\nxi = 0.3\ngrid = 1, 2\nshape = uniform\n",
        )
        .unwrap();
        assert_eq!(cfg.reps, 100);
        assert_eq!(cfg.size_grid, vec![1000, 2000]);
        assert_eq!(cfg.params["xi"], ParamValue::Number(0.3));
        assert_eq!(cfg.params["grid"], ParamValue::List(vec![1.0, 2.0]));
        assert_eq!(cfg.params["shape"], ParamValue::Text("uniform".into()));
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "seed = 1\nreps = 1\nsizes = 10\n",
            "experiment = a\nseed = -1\nreps = 1\nsizes = 10\n",
            "experiment = a\nseed = 1\nreps = 0\nsizes = 10\n",
            "experiment = a\nseed = 1\nreps = 1\nsizes = 10\n[weird]\n",
            "experiment = a\nseed = 1\nreps = 1\nsizes = 10\nfoo = 3\n",
            "experiment = a\nexperiment = b\nseed = 1\nreps = 1\nsizes = 10\n",
            "experiment = a\nseed = 1\nreps = 1\nsizes = 10\njunk line\n",
        ] {
            assert!(ExperimentConfig::parse(bad).is_err(), "{bad}");
        }
    }
}
