//! Volume and mask files.
//!
//! Two on-disk formats are understood, chosen by file extension:
//! `.nii`/`.hdr` for the NIfTI-1 subset in [`nifti`] and `.json`/`.raw`
//! for the sidecar format in [`sidecar`].

pub mod nifti;
pub mod sidecar;

use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{CtVolume, MaskVolume};
use nifti::Datatype;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Nifti,
    Sidecar,
}

fn format_of(path: &Path) -> Result<Format> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("nii") | Some("hdr") => Ok(Format::Nifti),
        Some("json") | Some("raw") => Ok(Format::Sidecar),
        _ => Err(Error::format("extension", format!("{}: expected .nii, .hdr, .json or .raw", path.display()))),
    }
}

fn read_samples(path: &Path) -> Result<(crate::Dims, crate::Spacing, Vec<f32>)> {
    match format_of(path)? {
        Format::Nifti => {
            let d = nifti::read(path)?;
            Ok((d.header.dims, d.header.spacing, d.samples))
        }
        Format::Sidecar => {
            let (meta, raw) = sidecar::read(path)?;
            let samples = meta.datatype()?.decode(&raw);
            Ok((meta.dims, meta.spacing, samples))
        }
    }
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<CtVolume> {
    let path = path.as_ref();
    let (dims, spacing, samples) = read_samples(path)?;
    CtVolume::new(dims, spacing, samples).map_err(|e| e.context(path.display().to_string()))
}

/// Writes float32 samples in the format implied by the extension.
pub fn save_volume(vol: &CtVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload: Vec<u8> = vol.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_payload(path, vol.dims(), vol.spacing(), Datatype::F32, &payload)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskVolume> {
    let path = path.as_ref();
    let (dims, spacing, samples) = read_samples(path)?;
    let mut data = Vec::with_capacity(samples.len());
    for (i, v) in samples.into_iter().enumerate() {
        match v {
            v if v == 0.0 => data.push(false),
            v if v == 1.0 => data.push(true),
            other => return Err(Error::format("data", format!("mask value {other} at element {i} is not 0 or 1"))),
        }
    }
    MaskVolume::new(dims, spacing, data).map_err(|e| e.context(path.display().to_string()))
}

/// Writes a uint8 mask; `load_mask` reads it back bit-for-bit.
pub fn save_mask(mask: &MaskVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload: Vec<u8> = mask.data().iter().map(|&b| b as u8).collect();
    write_payload(path, mask.dims(), mask.spacing(), Datatype::U8, &payload)
}

fn write_payload(path: &Path, dims: crate::Dims, spacing: crate::Spacing, dt: Datatype, payload: &[u8]) -> Result<()> {
    match format_of(path)? {
        Format::Nifti => nifti::write(&path.with_extension("nii"), dims, spacing, dt, payload),
        Format::Sidecar => sidecar::write(path, &sidecar::Sidecar::new(dims, spacing, dt), payload),
    }
}
