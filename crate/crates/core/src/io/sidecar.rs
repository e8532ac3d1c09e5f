//! Raw payload + JSON sidecar: `<name>.json` describes `<name>.raw`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::nifti::Datatype;
use crate::error::{Error, Result};
use crate::volume::{Dims, Spacing};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: Dims,
    pub spacing: Spacing,
    pub dtype: String,
    #[serde(default = "little_endian")]
    pub byte_order: String,
}

fn little_endian() -> String {
    "le".to_string()
}

impl Sidecar {
    pub fn new(dims: Dims, spacing: Spacing, dtype: Datatype) -> Self {
        let dtype = match dtype {
            Datatype::U8 => "u8",
            Datatype::I16 => "i16",
            Datatype::F32 => "f32",
        };
        Self { dims, spacing, dtype: dtype.to_string(), byte_order: little_endian() }
    }

    pub fn datatype(&self) -> Result<Datatype> {
        match self.dtype.as_str() {
            "u8" => Ok(Datatype::U8),
            "i16" => Ok(Datatype::I16),
            "f32" => Ok(Datatype::F32),
            other => Err(Error::format("dtype", format!("unsupported dtype {other:?}"))),
        }
    }
}

/// `(json, raw)` paths for a sidecar pair named by either file.
pub fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("raw"))
}

pub fn read(path: &Path) -> Result<(Sidecar, Vec<u8>)> {
    let (json_path, raw_path) = paths(path);
    let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let meta: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::format("sidecar", format!("{}: {e}", json_path.display())))?;
    if meta.byte_order != "le" {
        return Err(Error::format("byte_order", format!("unsupported byte order {:?}", meta.byte_order)));
    }
    let dtype = meta.datatype()?;
    if meta.dims.contains(&0) {
        return Err(Error::format("dims", format!("all dims must be >= 1, got {:?}", meta.dims)));
    }
    let raw = std::fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = meta.dims.iter().product::<usize>() * dtype.bytes();
    if raw.len() != expected {
        return Err(Error::SizeMismatch { expected, actual: raw.len() });
    }
    Ok((meta, raw))
}

pub fn write(path: &Path, meta: &Sidecar, payload: &[u8]) -> Result<()> {
    let (json_path, raw_path) = paths(path);
    let mut text = serde_json::to_string_pretty(meta).expect("sidecar serializes");
    text.push('\n');
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    std::fs::write(&raw_path, payload).map_err(|e| Error::io(&raw_path, e))
}
