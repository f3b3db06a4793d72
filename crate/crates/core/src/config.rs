//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected; keys that are absent keep their documented defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub trait KeyValueConfig: Default {
    /// Every accepted key, in the order they are written back out.
    const KEYS: &'static [&'static str];
    /// Keys applied before all others (e.g. presets that reset other fields).
    const FIRST: &'static [&'static str] = &[];

    fn set(&mut self, key: &str, value: &str) -> Result<()>;
    fn get(&self, key: &str) -> String;
    fn validate(&self) -> Result<()>;
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

pub fn parse_config<T: KeyValueConfig>(text: &str) -> Result<T> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !T::KEYS.contains(&k) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unknown key `{k}`"),
            });
        }
        if entries.insert(k.to_string(), (line_no, v.to_string())).is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    let mut cfg = T::default();
    for k in T::FIRST {
        if let Some((_, v)) = entries.remove(*k) {
            cfg.set(k, &v)?;
        }
    }
    for (k, (_, v)) in &entries {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config<T: KeyValueConfig>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(path, format!("cannot read config: {e}")))?;
    parse_config(&text)
}

/// Fully resolved config, one `key = value` line per key.
pub fn render_config<T: KeyValueConfig>(cfg: &T) -> String {
    T::KEYS
        .iter()
        .map(|k| format!("{k} = {}\n", cfg.get(k)))
        .collect()
}

/// Floats are written with 17 significant digits so that a rendered config
/// parses back to the identical value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
