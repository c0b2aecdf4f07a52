//! Line-oriented `key=value` configuration and value resolution.
//!
//! A value is taken from the command-line flag if present, then from the
//! environment (only `output` and `workers`, handled by clap), then from the
//! config file, then from the built-in default.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use super::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "d",
    "p",
    "lambda",
    "r",
    "theta",
    "psi",
    "m1",
    "m2",
    "k_blocks",
    "replicas",
    "n_max",
    "t_max",
    "epsilon",
    "tolerance",
    "lambda_lo",
    "lambda_hi",
    "seed",
    "mode",
    "env_seed",
    "output",
    "workers",
    "k",
    "reps",
    "graph",
    "d_min",
    "d_max",
    "points",
    "t_window",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key=value",
                    n + 1
                )));
            };
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key '{key}'",
                    n + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// JSON echo of a resolved value; integers too wide for JSON and non-finite
/// floats are kept as their text so the echo can be fed back in.
fn echo_value<T: Serialize + std::fmt::Display>(v: &T) -> Value {
    match serde_json::to_value(v) {
        Ok(Value::Null) | Err(_) => Value::String(v.to_string()),
        Ok(json) => json,
    }
}

/// Resolves values and records every resolved value for the config echo.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    echo: BTreeMap<String, Value>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Self {
            file,
            echo: BTreeMap::new(),
        }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Serialize + std::fmt::Display,
        T::Err: std::fmt::Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(raw.parse::<T>().map_err(|e| {
                    CliError::Usage(format!("config key {key}: cannot parse '{raw}': {e}"))
                })?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.echo.insert(key.to_string(), echo_value(v));
        }
        Ok(value)
    }

    pub fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Serialize + std::fmt::Display,
        T::Err: std::fmt::Display,
    {
        match self.get(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.echo.insert(key.to_string(), echo_value(&default));
                Ok(default)
            }
        }
    }

    pub fn req<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Serialize + std::fmt::Display,
        T::Err: std::fmt::Display,
    {
        self.get(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required value '{key}'")))
    }

    pub fn echo(self) -> BTreeMap<String, Value> {
        self.echo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dashes() {
        let cfg = ConfigFile::parse("# run\n d = 3\nn-max=100\n\n").unwrap();
        assert_eq!(cfg.get("d"), Some("3"));
        assert_eq!(cfg.get("n_max"), Some("100"));
    }

    #[test]
    fn rejects_garbage() {
        assert!(ConfigFile::parse("d 3").is_err());
        assert!(ConfigFile::parse("colour=red").is_err());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let cfg = ConfigFile::parse("d=3\np=0.5").unwrap();
        let mut r = Resolver::new(&cfg);
        assert_eq!(r.or("d", Some(7usize), 1).unwrap(), 7);
        assert_eq!(r.or("p", None, 1.0f64).unwrap(), 0.5);
        assert_eq!(r.or("lambda", None, 2.0f64).unwrap(), 2.0);
        assert!(r.req::<f64>("r", None).is_err());
        let echo = r.echo();
        assert_eq!(echo["d"], serde_json::json!(7));
        assert_eq!(echo["lambda"], serde_json::json!(2.0));
    }

    #[test]
    fn bad_file_value_is_usage_error() {
        let cfg = ConfigFile::parse("d=three").unwrap();
        let mut r = Resolver::new(&cfg);
        assert!(matches!(r.get::<usize>("d", None), Err(CliError::Usage(_))));
    }
}
