//! `key = value` config files; command-line flags win over file entries.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            entries.insert(normalize(k), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    /// Flag value if given, else the file entry, else `default`.
    pub fn resolve<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.entries.get(&normalize(key)) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {s:?}"))),
        }
    }

    pub fn resolve_opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.entries
            .get(&normalize(key))
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {s:?}"))))
            .transpose()
    }

    /// Boolean switches: on if the flag is set or the file says true.
    pub fn switch(&self, key: &str, flag: bool) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        self.resolve(key, None, false)
    }
}

fn normalize(k: &str) -> String {
    k.trim().trim_start_matches("--").replace('_', "-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let c = KvConfig::parse("# run\nsteps = 12\ngamma=0.3  # comment\nmitigate = true\n").unwrap();
        assert_eq!(c.resolve("steps", None, 1usize).unwrap(), 12);
        assert_eq!(c.resolve("steps", Some(4usize), 1).unwrap(), 4);
        assert_eq!(c.resolve("dt", None, 0.1f64).unwrap(), 0.1);
        assert_eq!(c.resolve_opt::<f64>("gamma", None).unwrap(), Some(0.3));
        assert!(c.switch("mitigate", false).unwrap());
        assert!(KvConfig::parse("novalue").is_err());
        assert!(c.resolve::<usize>("gamma", None, 0).is_err());
    }
}
