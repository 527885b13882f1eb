//! Flat `key = value` configuration files and run manifests.
//!
//! Keys use snake_case or the flag spelling (`burn_in` or `burn-in`). Lines
//! starting with `#` are comments. A manifest is a config file that lists
//! every resolved setting, so `--config manifest.cfg` repeats the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{invalid, CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.cfg";
pub const OUTPUT_DIR_ENV: &str = "QSDE_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "qsde-out";

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    source: String,
    entries: BTreeMap<String, (String, usize)>,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("{source}:{}: expected key = value", i + 1)))?;
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(invalid(format!("{source}:{}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(invalid(format!("{source}:{}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(Self {
            source: source.to_string(),
            entries,
        })
    }

    /// Rejects keys outside `allowed`, and a `command` key naming another
    /// subcommand.
    pub fn check_keys(&self, command: &str, allowed: &[&str]) -> CliResult<()> {
        for (key, (value, line)) in &self.entries {
            match key.as_str() {
                "command" if value != command => {
                    return Err(invalid(format!(
                        "{}:{line}: config is for '{value}', not '{command}'",
                        self.source
                    )))
                }
                "command" | "version" => {}
                k if allowed.contains(&k) => {}
                k => {
                    return Err(invalid(format!(
                        "{}:{line}: unknown key '{k}' for {command}",
                        self.source
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| invalid(format!("{}:{line}: invalid value '{v}' for {key}", self.source))),
        }
    }

    /// Comma-separated list.
    pub fn get_list(&self, key: &str) -> Vec<String> {
        self.entries
            .get(key)
            .map(|(v, _)| {
                v.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Flag value, else config value, else `None`.
pub fn pick<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str) -> CliResult<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

/// Flag value, else config value, else `default`.
pub fn pick_or<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> CliResult<T> {
    Ok(pick(flag, file, key)?.unwrap_or(default))
}

/// A boolean switch: set on the command line, or `true` in the config.
pub fn pick_switch(flag: bool, file: &ConfigFile, key: &str) -> CliResult<bool> {
    Ok(flag || file.get::<bool>(key)?.unwrap_or(false))
}

pub fn load_optional(path: Option<&Path>) -> CliResult<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

pub fn output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Ordered `key = value` lines describing a resolved run.
#[derive(Debug, Clone)]
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            lines: vec![
                ("command".into(), command.into()),
                ("version".into(), env!("CARGO_PKG_VERSION").into()),
            ],
        }
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl Display>) -> &mut Self {
        if let Some(v) = value {
            self.set(key, v);
        }
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# re-run with: qsde <command> --config manifest.cfg\n");
        for (k, v) in &self.lines {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        std::fs::write(dir.join(MANIFEST_NAME), self.render())?;
        Ok(())
    }
}

/// Creates the output directory once all validation has passed.
pub fn prepare_output(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create output directory {}: {e}", dir.display())))
}
