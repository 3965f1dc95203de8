//! Effective settings: flags win over the config file, which wins over
//! built-in defaults.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

/// Parsed TOML config. Keys are looked up in the table named after the
/// subcommand (`[split]`, `[tune-thresholds]`, …) and then at top level.
#[derive(Debug, Default)]
pub struct Config {
    table: toml::Table,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table = text
            .parse::<toml::Table>()
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Config { table })
    }

    pub fn get<T: DeserializeOwned>(&self, section: &str, key: &str) -> Result<Option<T>> {
        let value = self
            .table
            .get(section)
            .and_then(|s| s.as_table())
            .and_then(|s| s.get(key))
            .or_else(|| self.table.get(key).filter(|v| !v.is_table()));
        value
            .map(|v| {
                v.clone()
                    .try_into()
                    .with_context(|| format!("config key {section}.{key}"))
            })
            .transpose()
    }
}

pub struct Ctx {
    pub config: Config,
    pub command: &'static str,
    pub seed: u64,
    pub jobs: usize,
}

impl Ctx {
    pub fn new(config: Config, command: &'static str, seed: Option<u64>, jobs: Option<usize>) -> Result<Self> {
        let default_jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
        let mut ctx = Ctx { config, command, seed: 0, jobs: 1 };
        ctx.seed = ctx.pick("seed", seed, 0)?;
        ctx.jobs = ctx.pick("jobs", jobs, default_jobs)?.max(1);
        Ok(ctx)
    }

    pub fn opt<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.config.get(self.command, key),
        }
    }

    pub fn pick<T: DeserializeOwned>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let config = Config {
            table: "k = 5\nseed = 9\n[split]\nk = 7\nratios = \"0.8,0.1,0.1\"".parse().unwrap(),
        };
        let ctx = Ctx::new(config, "split", None, Some(2)).unwrap();
        assert_eq!(ctx.seed, 9);
        assert_eq!(ctx.jobs, 2);
        assert_eq!(ctx.pick("k", None, 1usize).unwrap(), 7);
        assert_eq!(ctx.pick("k", Some(3usize), 1).unwrap(), 3);
        assert_eq!(ctx.pick("missing", None, 4usize).unwrap(), 4);
        assert_eq!(ctx.opt::<String>("ratios", None).unwrap().as_deref(), Some("0.8,0.1,0.1"));
        assert!(ctx.pick::<usize>("ratios", None, 0).is_err());
    }
}
