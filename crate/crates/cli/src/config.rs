//! Plain-text `key = value` experiment configuration.
//!
//! One parameter per line, `#` starts a comment. Every key a command does
//! not consume is an error, so typos never silently fall back to defaults.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| CliError::Syntax {
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(syntax(format!("invalid key `{key}`")));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(syntax(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    /// Sets a key, replacing any value from the file.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

/// Typed, consumption-tracking view of a [`RawConfig`].
///
/// Resolved values, defaults included, are echoed into output headers.
pub struct Params<'a> {
    raw: &'a RawConfig,
    used: RefCell<BTreeSet<String>>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl<'a> Params<'a> {
    pub fn new(raw: &'a RawConfig) -> Self {
        Self {
            raw,
            used: RefCell::default(),
            resolved: RefCell::default(),
        }
    }

    fn lookup(&self, key: &str) -> Option<&'a str> {
        self.used.borrow_mut().insert(key.to_string());
        self.raw.get(key)
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.lookup(key) {
            None => Ok(None),
            Some(s) => {
                let v = s
                    .parse::<T>()
                    .map_err(|e| CliError::value(key, format!("cannot parse `{s}`: {e}")))?;
                self.record(key, s.to_string());
                Ok(Some(v))
            }
        }
    }

    pub fn get<T: FromStr + Display>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.opt(key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + Display>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T::Err: Display,
        T: Clone,
    {
        let Some(s) = self.lookup(key) else {
            self.record(key, join(default));
            return Ok(default.to_vec());
        };
        let items = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<T>()
                    .map_err(|e| CliError::value(key, format!("cannot parse `{t}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        self.record(key, join(&items));
        Ok(items)
    }

    /// A key whose value must be one of `choices`.
    pub fn choice(&self, key: &str, default: &str, choices: &[&str]) -> Result<String> {
        let v: String = self.get(key, default.to_string())?;
        if choices.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(CliError::value(key, format!("expected one of {choices:?}, got `{v}`")))
        }
    }

    /// Errors on any key not consumed so far.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .raw
            .entries
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::UnknownKeys(unknown.join(", ")))
        }
    }

    /// Resolved parameters in key order.
    pub fn echo(&self) -> Vec<(String, String)> {
        self.resolved
            .borrow()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub seed: u64,
    pub replications: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub burn_in: usize,
    pub sweeps: usize,
}

impl Common {
    pub fn read(p: &Params<'_>, sweeps: usize, burn_in: usize, replications: usize) -> Result<Self> {
        let c = Common {
            seed: p.get("seed", 0u64)?,
            replications: p.get("replications", replications)?,
            max_iter: p.get("max_iter", cavi::engine::DEFAULT_MAX_ITER)?,
            tol: p.get("tol", cavi::engine::DEFAULT_TOL)?,
            burn_in: p.get("burn_in", burn_in)?,
            sweeps: p.get("sweeps", sweeps)?,
        };
        if c.replications == 0 {
            return Err(CliError::value("replications", "must be at least 1"));
        }
        if !(c.tol > 0.0) {
            return Err(CliError::value("tol", "must be positive"));
        }
        if c.sweeps <= c.burn_in {
            return Err(CliError::value("sweeps", "must exceed burn_in"));
        }
        Ok(c)
    }
}

pub(crate) fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::value(key, format!("must be positive, got {v}")))
    }
}

pub(crate) fn at_least(key: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::value(key, format!("must be at least {min}, got {v}")))
    }
}
