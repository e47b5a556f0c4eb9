//! Flat `key = value` config files. Command-line flags always win over
//! file entries, which win over built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Blank lines and `#` comments are ignored. Keys are normalised so
    /// that `r-max` and `r_max` name the same entry.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected key = value", lineno + 1);
            };
            let key = normalize(k);
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    /// Merges `key=value` pairs separated by commas, as given on the
    /// command line; they override file entries.
    pub fn merge_inline(&mut self, spec: &str) -> Result<()> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| anyhow!("parameter `{part}` is not of the form key=value"))?;
            self.entries.insert(normalize(k), v.trim().to_string());
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize(key)).map(String::as_str)
    }

    /// Flag if given, else the file entry, else `None`.
    pub fn opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key `{key}`: cannot parse `{v}`: {e}")),
        }
    }

    pub fn get<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.opt(flag, key)?
            .ok_or_else(|| anyhow!("missing required setting `{key}` (flag or config entry)"))
    }
}

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

/// Comma-separated list of floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("`{t}` is not a number")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_entries() {
        let cfg = FileConfig::parse("octaves = 6\n# comment\nr-max=0.5 # trailing\n").unwrap();
        assert_eq!(cfg.get(None, "octaves", 8usize).unwrap(), 6);
        assert_eq!(cfg.get(Some(3usize), "octaves", 8).unwrap(), 3);
        assert_eq!(cfg.opt::<f64>(None, "r_max").unwrap(), Some(0.5));
        assert_eq!(cfg.get(None, "m", 4usize).unwrap(), 4);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(FileConfig::parse("octaves 6").is_err());
        assert!(FileConfig::parse(" = 3").is_err());
        let cfg = FileConfig::parse("m = four").unwrap();
        assert!(cfg.get::<usize>(None, "m", 4).is_err());
    }

    #[test]
    fn inline_params_override() {
        let mut cfg = FileConfig::parse("depth = 3").unwrap();
        cfg.merge_inline("depth=5, side=2").unwrap();
        assert_eq!(cfg.get(None, "depth", 0u32).unwrap(), 5);
        assert_eq!(cfg.get(None, "side", 0.0).unwrap(), 2.0);
        assert!(cfg.merge_inline("oops").is_err());
    }

    #[test]
    fn lists_parse() {
        assert_eq!(parse_list("0.1, 0.2,0.4").unwrap(), vec![0.1, 0.2, 0.4]);
        assert!(parse_list("0.1,x").is_err());
    }
}
