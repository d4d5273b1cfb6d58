//! Run configuration: command-line flags merged over an optional flat key=value file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use crate::error::CliError;

/// Options shared by every command. Each may also come from `--config FILE`.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Built-in system name
    #[arg(long)]
    pub system: Option<String>,
    /// System parameter, repeatable
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Flat key=value file supplying the same keys as the flags (flags win)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed for the quasi-random grid offset
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Config-file entries for one command; flag values passed to the getters take precedence.
pub struct Settings {
    values: BTreeMap<String, String>,
    allowed: &'static [&'static str],
}

fn parse_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {} is not key=value: {raw}", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    /// Config-file entries, checked against the keys this command accepts.
    /// `param.NAME` entries are system parameters.
    pub fn load(common: &CommonArgs, allowed: &'static [&'static str]) -> Result<Settings, CliError> {
        let values = match &common.config {
            Some(p) => parse_file(p)?,
            None => BTreeMap::new(),
        };
        for k in values.keys() {
            if !(k.starts_with("param.") || allowed.contains(&k.as_str()) || COMMON_KEYS.contains(&k.as_str())) {
                return Err(CliError::Config(format!("unknown config key '{k}'")));
            }
        }
        Ok(Settings { values, allowed })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(self.allowed.contains(&key) || COMMON_KEYS.contains(&key), "{key}");
        self.values.get(key).map(String::as_str)
    }

    pub fn string(&self, flag: &Option<String>, key: &str) -> Option<String> {
        flag.clone().or_else(|| self.raw(key).map(str::to_string))
    }

    pub fn parsed<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|_| CliError::Config(format!("invalid value for {key}: '{s}'"))),
        }
    }

    pub fn vector(&self, flag: &Option<String>, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.string(flag, key).map(|s| parse_vector(&s, key)).transpose()
    }

    pub fn flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.parsed::<bool>(None, key)?.unwrap_or(false))
    }

    /// System parameters: file entries `param.k=v` overridden by `--param k=v`.
    pub fn params(&self, flags: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
        let mut out = BTreeMap::new();
        for (k, v) in &self.values {
            if let Some(name) = k.strip_prefix("param.") {
                out.insert(name.to_string(), parse_number(v, k)?);
            }
        }
        for kv in flags {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| CliError::Config(format!("--param expects KEY=VALUE, got '{kv}'")))?;
            out.insert(k.trim().to_string(), parse_number(v, k)?);
        }
        Ok(out)
    }
}

const COMMON_KEYS: &[&str] = &["system", "out", "tol", "seed"];

fn parse_number(s: &str, key: &str) -> Result<f64, CliError> {
    let x: f64 = s.trim().parse().map_err(|_| CliError::Config(format!("invalid number for {key}: '{s}'")))?;
    if !x.is_finite() {
        return Err(CliError::Config(format!("{key} must be finite")));
    }
    Ok(x)
}

pub fn parse_vector(s: &str, key: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(|p| parse_number(p, key)).collect()
}

/// Fully resolved common options.
pub struct Resolved {
    pub system: String,
    pub params: BTreeMap<String, f64>,
    pub out: Option<PathBuf>,
    pub tol: f64,
    pub seed: u64,
}

pub fn resolve_common(common: &CommonArgs, settings: &Settings, default_tol: f64) -> Result<Resolved, CliError> {
    let system =
        settings.string(&common.system, "system").ok_or_else(|| CliError::Config("--system is required".into()))?;
    let tol = settings.parsed(common.tol, "tol")?.unwrap_or(default_tol);
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::Config("--tol must be a non-negative number".into()));
    }
    Ok(Resolved {
        system,
        params: settings.params(&common.params)?,
        out: settings.string(&common.out.as_ref().map(|p| p.display().to_string()), "out").map(PathBuf::from),
        tol,
        seed: settings.parsed(common.seed, "seed")?.unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn vectors_parse_and_reject_garbage() {
        assert_eq!(parse_vector("1,0.5,-2", "q0").unwrap(), vec![1.0, 0.5, -2.0]);
        assert!(parse_vector("1,,2", "q0").is_err());
        assert!(parse_vector("1,inf", "q0").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nsystem = carriage\ntol=1e-3\nparam.m=5").unwrap();
        let common = CommonArgs {
            system: Some("free_particle".into()),
            params: vec!["m=2".into()],
            config: Some(f.path().to_path_buf()),
            ..CommonArgs::default()
        };
        let s = Settings::load(&common, &[]).unwrap();
        let r = resolve_common(&common, &s, 1e-8).unwrap();
        assert_eq!(r.system, "free_particle");
        assert_eq!(r.tol, 1e-3);
        assert_eq!(r.params["m"], 2.0);
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "colour=blue").unwrap();
        let common = CommonArgs { config: Some(f.path().to_path_buf()), ..CommonArgs::default() };
        assert!(matches!(Settings::load(&common, &["dt"]), Err(CliError::Config(_))));
    }
}
