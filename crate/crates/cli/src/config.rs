//! Key-value configuration file: one `key = value` per line, `#` starts a
//! comment. Keys are the long flag names (`seed`, `n-list`, `samples`, ...).

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// Environment variable consulted last for the seed.
pub const SEED_ENV: &str = "NODALSPHERE_SEED";

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected key = value", no + 1);
            };
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key `{key}` = `{v}`: {e}")),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => parse_list(v).map(Some).with_context(|| format!("config key `{key}`")),
        }
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| anyhow::anyhow!("`{p}`: {e}")))
        .collect()
}

/// Flag, then config file, then `fallback`.
pub fn pick<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str, fallback: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    Ok(match flag {
        Some(v) => v,
        None => cfg.get(key)?.unwrap_or(fallback),
    })
}

/// Seed precedence: flag, config file, environment, 0.
pub fn resolve_seed(flag: Option<u64>, cfg: &ConfigFile) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = cfg.get::<u64>("seed")? {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v}")),
        Err(_) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let c = ConfigFile::parse("# c\nseed = 5\nn_list = 10, 20 40\n\nsamples=7 # trailing\n").unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(5));
        assert_eq!(c.get_list::<u32>("n-list").unwrap(), Some(vec![10, 20, 40]));
        assert_eq!(c.get::<usize>("samples").unwrap(), Some(7));
        assert!(ConfigFile::parse("nonsense").is_err());
    }

    #[test]
    fn flag_beats_config() {
        let c = ConfigFile::parse("seed = 5").unwrap();
        assert_eq!(resolve_seed(Some(9), &c).unwrap(), 9);
        assert_eq!(resolve_seed(None, &c).unwrap(), 5);
    }
}
