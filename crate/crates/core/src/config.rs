//! `key=value` parameter files: one pair per line, `#` starts a comment.

use std::str::FromStr;

use crate::error::{Error, Result};

/// Implemented by every parameter block that can be read from a key=value
/// file.
pub trait ApplyKey {
    /// Applies one pair. Returns `Ok(false)` when the key is not recognised.
    fn apply_key(&mut self, key: &str, value: &str) -> Result<bool>;
}

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, format!("expected key=value, got '{line}'")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Parses `text` into a default-initialised `T`, rejecting unknown keys.
pub fn from_pairs<T: ApplyKey + Default>(text: &str) -> Result<T> {
    let mut target = T::default();
    for (k, v) in parse_pairs(text)? {
        if !target.apply_key(&k, &v)? {
            return Err(Error::config(format!("unknown key '{k}'")));
        }
    }
    Ok(target)
}

pub(crate) fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(format!("invalid value '{raw}' for {key}")))
}

pub(crate) fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!("invalid flag '{raw}' for {key}"))),
    }
}

pub(crate) fn unit_interval(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{key} must lie in [0,1], got {v}")))
    }
}
