//! Flat `key = value` configuration text, shared by the data generator and
//! the trainer. Blank lines and `#` comments are ignored.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("config line {}: expected key=value", lineno + 1))
        })?;
        pairs.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text)
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse `{value}` for {key}")))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("cannot parse `{value}` for {key}"))),
    }
}

/// Parses `lo..hi` or `lo,hi` (a single value means `lo == hi`).
pub(crate) fn parse_range<T: FromStr + Copy>(key: &str, value: &str) -> Result<(T, T)> {
    let parts: Vec<&str> = if value.contains("..") {
        value.split("..").collect()
    } else {
        value.split(',').collect()
    };
    match parts.as_slice() {
        [one] => {
            let v = parse_value(key, one.trim())?;
            Ok((v, v))
        }
        [lo, hi] => Ok((parse_value(key, lo.trim())?, parse_value(key, hi.trim())?)),
        _ => Err(Error::InvalidArgument(format!("cannot parse range `{value}` for {key}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_and_ranges() {
        let p = parse_pairs("# c\nlearning-rate = 0.1\n\nruns=3 # trailing\n").unwrap();
        assert_eq!(p, vec![
            ("learning_rate".into(), "0.1".into()),
            ("runs".into(), "3".into())
        ]);
        assert!(parse_pairs("oops").is_err());
        assert_eq!(parse_range::<usize>("n", "200..500").unwrap(), (200, 500));
        assert_eq!(parse_range::<f64>("w", "0.1, 0.2").unwrap(), (0.1, 0.2));
        assert_eq!(parse_range::<usize>("n", "7").unwrap(), (7, 7));
        assert!(parse_bool("x", "maybe").is_err());
    }
}
