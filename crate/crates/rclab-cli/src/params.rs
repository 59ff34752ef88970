//! Key=value parameter handling: command-line flags, optional config file,
//! typed extraction with defaults, and rejection of unknown keys. Flags win
//! over config-file values; every resolved value is echoed into the output
//! provenance.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub struct Params {
    values: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Params {
    /// Splits raw arguments into leading command words and `--key value`
    /// pairs. A flag without a following value is recorded as `true`.
    pub fn parse(args: &[String]) -> Result<(Vec<String>, Params), UsageError> {
        let mut words = Vec::new();
        let mut values = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let tok = &args[i];
            if let Some(key) = tok.strip_prefix("--") {
                if key.is_empty() {
                    return Err(UsageError("bare `--` is not a flag".into()));
                }
                if let Some((k, v)) = key.split_once('=') {
                    values.insert(k.to_string(), v.to_string());
                } else if i + 1 < args.len() && !args[i + 1].starts_with("--") {
                    values.insert(key.to_string(), args[i + 1].clone());
                    i += 1;
                } else {
                    values.insert(key.to_string(), "true".to_string());
                }
            } else if values.is_empty() {
                words.push(tok.clone());
            } else {
                return Err(UsageError(format!(
                    "unexpected positional argument {tok:?} after flags"
                )));
            }
            i += 1;
        }
        Ok((
            words,
            Params {
                values,
                resolved: BTreeMap::new(),
            },
        ))
    }

    /// Loads `key=value` lines (with `#` comments); command-line flags keep
    /// precedence over file values.
    pub fn merge_config(&mut self, path: &Path) -> Result<(), UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                UsageError(format!(
                    "config line {} is not key=value: {line:?}",
                    lineno + 1
                ))
            })?;
            self.values
                .entry(k.trim().to_string())
                .or_insert_with(|| v.trim().to_string());
        }
        Ok(())
    }

    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        let v = self.values.remove(key)?;
        self.resolved.insert(key.to_string(), v.clone());
        Some(v)
    }

    fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, UsageError>
    where
        T::Err: Display,
    {
        raw.parse()
            .map_err(|e| UsageError(format!("--{key} {raw:?}: {e}")))
    }

    /// Required value with an optional default.
    pub fn take<T: FromStr + Display>(
        &mut self,
        key: &str,
        default: Option<T>,
    ) -> Result<T, UsageError>
    where
        T::Err: Display,
    {
        match self.take_raw(key) {
            Some(raw) => Self::parse_value(key, &raw),
            None => match default {
                Some(v) => {
                    self.resolved.insert(key.to_string(), v.to_string());
                    Ok(v)
                }
                None => Err(UsageError(format!("missing required flag --{key}"))),
            },
        }
    }

    /// Optional value, absent when not given.
    pub fn take_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, UsageError>
    where
        T::Err: Display,
    {
        match self.take_raw(key) {
            Some(raw) => Ok(Some(Self::parse_value(key, &raw)?)),
            None => Ok(None),
        }
    }

    /// Required value with no default (for types without a display form).
    pub fn take_req<T: FromStr>(&mut self, key: &str) -> Result<T, UsageError>
    where
        T::Err: Display,
    {
        self.take_opt(key)?
            .ok_or_else(|| UsageError(format!("missing required flag --{key}")))
    }

    /// Boolean flag; present (or `=true`) means set.
    pub fn take_flag(&mut self, key: &str) -> Result<bool, UsageError> {
        match self.take_raw(key) {
            None => Ok(false),
            Some(raw) => match raw.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(UsageError(format!("--{key} expects a boolean, got {other:?}"))),
            },
        }
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, UsageError>
    where
        T::Err: Display,
    {
        match self.take_raw(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| Self::parse_value(key, s.trim()))
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    /// Fails on any key that was never consumed.
    pub fn finish(self) -> Result<BTreeMap<String, String>, UsageError> {
        if let Some(key) = self.values.keys().next() {
            return Err(UsageError(format!("unknown flag --{key}")));
        }
        Ok(self.resolved)
    }
}
