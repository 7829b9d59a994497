//! Versioned JSON file helpers shared by every on-disk format.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Major version written into, and accepted from, every file format.
pub const FORMAT_MAJOR: u32 = 1;

pub fn current_version() -> String {
    format!("{FORMAT_MAJOR}.0")
}

/// Rejects versions whose major component is not [`FORMAT_MAJOR`].
pub fn check_version(kind: &'static str, version: &str) -> Result<()> {
    let major = version.split('.').next().unwrap_or("").trim();
    match major.parse::<u32>() {
        Ok(m) if m == FORMAT_MAJOR => Ok(()),
        _ => Err(Error::Version {
            kind,
            found: version.to_string(),
            supported: FORMAT_MAJOR,
        }),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
