//! Flat key = value configuration files mirroring the long flag names.
//!
//! One `key = value` per line, `#` starts a comment, blank lines ignored.
//! Flag values override file values; keys outside the flag vocabulary are
//! rejected with their line number.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Every key a config file may carry; mirrors the CLI long flags.
const KNOWN_KEYS: &[&str] = &[
    "scheme", "n", "m", "delta", "k", "lp", "sigma-n", "delta-sp", "lambda", "q", "energy",
    "pt", "pw", "t0", "seed", "runs", "slot-cap", "branch", "x", "var", "from", "to", "points",
    "log", "q-grid", "k-max", "lp-from", "lp-to", "lp-points", "regime", "wtol", "roottol",
    "gridstep",
];

#[derive(Debug)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        ConfigFile {
            values: HashMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, String> {
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{origin}:{}: expected `key = value`, got `{raw}`",
                    idx + 1
                ));
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(format!("{origin}:{}: unknown key `{key}`", idx + 1));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(format!("{origin}:{}: duplicate key `{key}`", idx + 1));
            }
        }
        Ok(ConfigFile { values })
    }

    /// Flag value if present, else the file value parsed as T.
    pub fn resolve<T: FromStr + Copy>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, String>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("config key `{key}`: cannot parse `{raw}`: {e}")),
        }
    }

    pub fn resolve_string(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.values.get(key).cloned())
    }
}

/// Echo of every resolved parameter, for the JSON `meta.config` block.
#[derive(Debug, Default)]
pub struct ConfigEcho {
    entries: Vec<(String, String)>,
}

impl ConfigEcho {
    pub fn put(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (k, v) in &self.entries {
            map.insert(k.clone(), serde_json::Value::String(v.clone()));
        }
        serde_json::Value::Object(map)
    }
}
