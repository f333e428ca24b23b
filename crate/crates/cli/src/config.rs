//! `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Path values are
//! resolved against the directory holding the file. Command-line flags are
//! applied on top with [`Settings::set`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use afrec_core::error::Error;
use afrec_core::pipeline::ResourcePaths;
use sha2::{Digest, Sha256};

/// Keys holding file or directory paths.
pub const PATH_KEYS: [&str; 9] = [
    "schema", "lexicon", "rules", "codemap", "windows", "scores", "reports", "coded", "deaths",
];

/// Keys holding scalar parameters.
pub const VALUE_KEYS: [&str; 14] = [
    "corpus_format",
    "patients",
    "language",
    "prevalence",
    "corruption",
    "test_fraction",
    "folds",
    "bootstrap",
    "systems",
    "undersample",
    "external_predictor",
    "external_variants",
    "seed",
    "workers",
];

/// Keys that do not influence artifact contents.
const UNHASHED: [&str; 1] = ["workers"];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl Settings {
    pub fn parse(text: &str, base: &Path) -> Result<Settings, Error> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            check_key(k).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            if values.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: `{k}` set twice", n + 1)));
            }
        }
        Ok(Settings {
            values,
            base: base.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Settings, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Settings::parse(&text, base)
    }

    /// Overrides `key` with a command-line value.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(check_key(key).is_ok(), "unknown key {key}");
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| self.base.join(v))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("`{key} = {v}`: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, Error>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list; empty when unset.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default()
    }

    /// SHA-256 over the sorted effective settings. Path values enter as
    /// written, so moving a config tree leaves the hash unchanged.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.values.iter().filter(|(k, _)| !UNHASHED.contains(&k.as_str())) {
            h.update(format!("{k}={v}\n"));
        }
        hex::encode(h.finalize())
    }

    pub fn resource_paths(&self) -> ResourceOverrides {
        ResourceOverrides {
            schema: self.path("schema"),
            lexicon: self.path("lexicon"),
            rules: self.path("rules"),
            codemap: self.path("codemap"),
            windows: self.path("windows"),
            scores: self.path("scores"),
        }
    }
}

fn check_key(k: &str) -> Result<(), String> {
    if PATH_KEYS.contains(&k) || VALUE_KEYS.contains(&k) {
        Ok(())
    } else {
        Err(format!("unknown key `{k}`"))
    }
}

/// Owned counterpart of [`ResourcePaths`].
#[derive(Debug, Clone, Default)]
pub struct ResourceOverrides {
    pub schema: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub codemap: Option<PathBuf>,
    pub windows: Option<PathBuf>,
    pub scores: Option<PathBuf>,
}

impl ResourceOverrides {
    pub fn as_paths(&self) -> ResourcePaths<'_> {
        ResourcePaths {
            schema: self.schema.as_deref(),
            lexicon: self.lexicon.as_deref(),
            rules: self.rules.as_deref(),
            codemap: self.codemap.as_deref(),
            windows: self.windows.as_deref(),
            scores: self.scores.as_deref(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_paths() {
        let s = Settings::parse("# demo\nschema = res/schema.csv\n\npatients=10\n", Path::new("/cfg")).unwrap();
        assert_eq!(s.path("schema").unwrap(), PathBuf::from("/cfg/res/schema.csv"));
        assert_eq!(s.get::<usize>("patients").unwrap(), Some(10));
        assert_eq!(s.get::<usize>("folds").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(Settings::parse("colour = red", Path::new(".")).is_err());
        assert!(Settings::parse("seed = 1\nseed = 2", Path::new(".")).is_err());
        assert!(Settings::parse("seed", Path::new(".")).is_err());
    }

    #[test]
    fn digest_ignores_workers_and_order() {
        let a = Settings::parse("seed = 1\npatients = 5\nworkers = 1", Path::new("/a")).unwrap();
        let b = Settings::parse("patients = 5\nseed = 1\nworkers = 4", Path::new("/b")).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = Settings::parse("patients = 6\nseed = 1", Path::new("/a")).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn bad_value_is_a_config_error() {
        let s = Settings::parse("patients = many", Path::new(".")).unwrap();
        assert!(matches!(s.get::<usize>("patients"), Err(Error::Config(_))));
    }
}
