use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Writes a file, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

/// Pretty JSON with object keys sorted at every level.
pub fn to_stable_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's default map is a BTreeMap, so a round trip through
    // `Value` sorts keys regardless of struct field order.
    let v = serde_json::to_value(value).map_err(|e| HarnessError::Manifest(format!("serialize: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| HarnessError::Manifest(format!("serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_stable_json(value)?.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| HarnessError::ConfigFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
