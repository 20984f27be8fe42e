//! Optional TOML config layered under command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::Deserialize;

use crate::{EvalArgs, GenerateArgs, InspectArgs, TrainArgs, DATA_ENV};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub generate: GenerateArgs,
    pub train: TrainArgs,
    pub eval: EvalArgs,
    pub inspect: InspectArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        Ok(toml::from_str(&fs::read_to_string(path)?)?)
    }
}

/// `self.field = self.field.or(file.field)` for each listed field.
macro_rules! layer_fields {
    ($flags:ident, $file:ident; $($field:ident),* $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field; } )*
    };
}
pub(crate) use layer_fields;

/// An explicit directory, else `$KINCHAIN_DATA`.
pub fn data_dir(flag: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match std::env::var_os(DATA_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => bail!("no {what} given: pass it as a flag or set {DATA_ENV}"),
    }
}

/// Parses `WxH`, e.g. `128x96`.
pub fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let Some((w, h)) = s.split_once(['x', 'X']) else {
        bail!("resolution {s:?} is not of the form WIDTHxHEIGHT");
    };
    let (w, h): (usize, usize) = (w.trim().parse()?, h.trim().parse()?);
    if w < 2 || h < 2 {
        bail!("resolution {s:?} is too small");
    }
    Ok((w, h))
}

/// Quotes a path for the printed command line when it needs it.
pub fn shell_path(p: &Path) -> String {
    let s = p.display().to_string();
    if s.chars().any(|c| c.is_whitespace() || c == '\'' || c == '"') {
        format!("'{}'", s.replace('\'', "'\\''"))
    } else {
        s
    }
}
