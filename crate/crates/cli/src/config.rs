//! Flat TOML configuration files.
//!
//! A config file is a single table of `key = value` pairs whose keys are the
//! field names of the command's config struct (`TrainConfig`, `EaConfig`,
//! `SweepConfig`). Missing keys keep their defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use tndp_core::{Error, Result};

pub fn parse_flat<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        context: context.to_string(),
        message: e.to_string(),
    })?;
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(Error::Parse {
            context: context.to_string(),
            message: format!("config must be flat key = value pairs; [{k}] is a table"),
        });
    }
    T::deserialize(toml::Value::Table(table)).map_err(|e| Error::Parse {
        context: context.to_string(),
        message: e.to_string(),
    })
}

/// Reads `path` if given, otherwise returns the defaults.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_flat(&text, &p.display().to_string())
        }
    }
}
