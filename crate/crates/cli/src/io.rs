//! File helpers shared by the subcommands.

use std::fs;
use std::path::Path;

use kaap_core::predictor::Emotion;
use kaap_core::{Error, MultimodalSample, ToyModel};
use serde::de::DeserializeOwned;

use crate::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())).into())
}

pub fn load_model(path: &Path) -> CliResult<ToyModel> {
    if !path.exists() {
        return Err(CliError::io(path, std::io::ErrorKind::NotFound.into()));
    }
    Ok(ToyModel::load(path)?)
}

pub fn load_sample(path: &Path) -> CliResult<MultimodalSample> {
    read_json(path)
}

pub fn load_samples(path: &Path) -> CliResult<Vec<MultimodalSample>> {
    read_json(path)
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Accepts a class index (`1`) or name (`happy`).
pub fn parse_class(s: &str) -> CliResult<usize> {
    if let Ok(i) = s.parse::<usize>() {
        return Ok(Emotion::from_index(i)?.index());
    }
    Emotion::ALL
        .iter()
        .find(|e| e.name().eq_ignore_ascii_case(s))
        .map(|e| e.index())
        .ok_or_else(|| Error::Config(format!("unknown class {s:?}")).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names_and_indices() {
        assert_eq!(parse_class("happy").unwrap(), 1);
        assert_eq!(parse_class("SAD").unwrap(), 3);
        assert_eq!(parse_class("2").unwrap(), 2);
        assert!(parse_class("7").is_err());
        assert!(parse_class("bored").is_err());
    }
}
