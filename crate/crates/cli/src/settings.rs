//! Flag and config-file resolution.
//!
//! A config file is TOML whose keys are the long flag names of the
//! subcommand, e.g. `seed = 7` or `max-attempt = "split:100"`. A flag given
//! on the command line wins over the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{io_error, CliError, Result};

#[derive(Debug, Clone, Default)]
pub struct Settings {
    table: Table,
    /// Resolved values, in resolution order, for the manifest.
    resolved: Vec<(String, String)>,
}

pub fn read_toml(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.parse::<Table>()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        Ok(Self {
            table: match path {
                Some(p) => read_toml(p)?,
                None => Table::new(),
            },
            resolved: Vec::new(),
        })
    }

    pub fn from_table(table: Table) -> Self {
        Self {
            table,
            resolved: Vec::new(),
        }
    }

    fn config_text(&self, key: &str) -> Result<Option<String>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Integer(i)) => Ok(Some(i.to_string())),
            Some(Value::Float(f)) => Ok(Some(f.to_string())),
            Some(Value::Boolean(b)) => Ok(Some(b.to_string())),
            Some(other) => Err(CliError::Usage(format!("config key `{key}` has unsupported value {other}"))),
        }
    }

    fn record(&mut self, key: &str, value: &str) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    /// The flag value if given, else the config value, parsed as `T`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.config_text(key)? {
                Some(text) => Some(
                    text.parse::<T>()
                        .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.record(key, &v.to_string());
        }
        Ok(value)
    }

    pub fn get_or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        match self.get(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, &default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        self.get(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required option --{key}")))
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v = self.get(key, flag.map(|p| p.to_string_lossy().into_owned()))?;
        Ok(v.map(PathBuf::from))
    }

    pub fn require_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.path(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required option --{key}")))
    }

    /// A list flag; the config value may be a TOML array of strings.
    pub fn list(&mut self, key: &str, flag: Vec<String>) -> Result<Vec<String>> {
        let values = if !flag.is_empty() {
            flag
        } else {
            match self.table.get(key) {
                None => Vec::new(),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Ok(s.clone()),
                        other => Err(CliError::Usage(format!("config key `{key}`: {other} is not a string"))),
                    })
                    .collect::<Result<_>>()?,
                Some(Value::String(s)) => vec![s.clone()],
                Some(other) => return Err(CliError::Usage(format!("config key `{key}`: {other} is not a list"))),
            }
        };
        if !values.is_empty() {
            self.record(key, &values.join(","));
        }
        Ok(values)
    }

    pub fn resolved(&self) -> &[(String, String)] {
        &self.resolved
    }
}

/// Overlays the keys of `overrides` onto `base` and deserializes the result.
/// Unknown keys are rejected.
pub fn overlay<T>(base: &T, overrides: &Table, what: &str) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut table = match Value::try_from(base) {
        Ok(Value::Table(t)) => t,
        Ok(_) => return Err(CliError::Check(format!("{what} is not a table"))),
        Err(e) => return Err(CliError::Check(e.to_string())),
    };
    for (k, v) in overrides {
        if !table.contains_key(k) {
            let valid: Vec<&String> = table.keys().collect();
            return Err(CliError::Usage(format!(
                "unknown {what} key `{k}`; valid keys: {}",
                valid.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        table.insert(k.clone(), v.clone());
    }
    Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Usage(format!("invalid {what}: {e}")))
}
