//! Key=value config files with bracketed sections, one section per
//! subcommand plus a shared `[sketch]` section, and the precedence rules
//! that merge them with command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Parsed config file: section name -> key -> raw value. Keys mirror the
/// long flag names of the section's subcommand.
#[derive(Debug, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("config file {}: {e}", path.display())))?;
        Self::parse(&text)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<ConfigFile, String> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| format!("line {}: unterminated section header", idx + 1))?
                    .trim();
                if name.is_empty() {
                    return Err(format!("line {}: empty section name", idx + 1));
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", idx + 1))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", idx + 1));
            }
            if current.is_empty() {
                return Err(format!("line {}: key outside any [section]", idx + 1));
            }
            sections
                .get_mut(&current)
                .expect("current section exists")
                .insert(key.to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { sections })
    }

    pub fn sections(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, String>)> {
        self.sections.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(String::as_str)
    }
}

/// Resolves one subcommand's settings: an explicit flag wins, then the
/// subcommand's config section, then (for sketch constants) the shared
/// `[sketch]` section, then the built-in default.
pub struct Settings<'a> {
    file: Option<&'a ConfigFile>,
    section: &'a str,
}

/// Keys the shared `[sketch]` section may define, and the per-subcommand
/// flag each one backs.
pub const SKETCH_SECTION: &str = "sketch";
pub const SKETCH_KEYS: [(&str, &str); 4] = [
    ("method", "sketch"),
    ("c", "sketch-c"),
    ("omega", "sketch-omega"),
    ("eta", "eta"),
];

impl<'a> Settings<'a> {
    pub fn new(file: Option<&'a ConfigFile>, section: &'a str) -> Self {
        Settings { file, section }
    }

    fn lookup(&self, key: &str) -> Option<&'a str> {
        let file = self.file?;
        if let Some(v) = file.raw(self.section, key) {
            return Some(v);
        }
        // Sketch constants may come from the shared section, e.g. a
        // fragment written by `calibrate`.
        SKETCH_KEYS
            .iter()
            .find(|(_, flag)| *flag == key)
            .and_then(|(skey, _)| file.raw(SKETCH_SECTION, skey))
    }

    fn parse<T>(&self, key: &str, raw: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        raw.parse()
            .map_err(|e| CliError::Config(format!("[{}] {key} = {raw}: {e}", self.section)))
    }

    pub fn value<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.optional(flag, key)?.unwrap_or(default))
    }

    pub fn optional<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.lookup(key) {
            Some(raw) => Ok(Some(self.parse(key, raw)?)),
            None => Ok(None),
        }
    }

    /// Boolean switch: the flag asserts true; otherwise the config value
    /// must be true/false/1/0.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        match self.lookup(key) {
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") | None => Ok(false),
            Some(other) => Err(CliError::Config(format!(
                "[{}] {key} = {other}: expected true/false",
                self.section
            ))),
        }
    }

    pub fn required<T>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.optional(flag, key)?.ok_or_else(|| {
            CliError::Config(format!(
                "--{key} is required (flag or [{}] config key)",
                self.section
            ))
        })
    }

    /// Output path: flag/config/default name, resolved against the
    /// default-output-directory environment variable when relative.
    pub fn out_path(&self, flag: Option<PathBuf>, default_name: &str) -> Result<PathBuf, CliError> {
        let path = match self.optional(flag, "out")? {
            Some(p) => p,
            None => PathBuf::from(default_name),
        };
        Ok(resolve_out_dir(path))
    }
}

/// Environment variable naming the directory relative output paths land in.
pub const OUT_DIR_VAR: &str = "SKETCHLS_OUT_DIR";

fn resolve_out_dir(path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        return path;
    }
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path,
    }
}

/// Companion summary-file path: `runs/cov.csv` -> `runs/cov_summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_summary.{ext}"),
        None => format!("{stem}_summary"),
    };
    out.with_file_name(name)
}
