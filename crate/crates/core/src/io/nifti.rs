//! Minimal NIfTI-1 reader/writer.
//!
//! Only the subset needed here: little-endian, uncompressed, exactly three
//! spatial dimensions, datatypes uint8/int16/float32. Orientation
//! matrices are ignored; spacing comes from `pixdim[1..=3]`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{Dims, Spacing};

pub const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    U8,
    I16,
    F32,
}

impl Datatype {
    fn code(self) -> i16 {
        match self {
            Datatype::U8 => DT_UINT8,
            Datatype::I16 => DT_INT16,
            Datatype::F32 => DT_FLOAT32,
        }
    }

    fn bitpix(self) -> i16 {
        (self.bytes() * 8) as i16
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::U8 => 1,
            Datatype::I16 => 2,
            Datatype::F32 => 4,
        }
    }

    /// Decodes little-endian elements to f32.
    pub fn decode(self, bytes: &[u8]) -> Vec<f32> {
        match self {
            Datatype::U8 => bytes.iter().map(|&b| b as f32).collect(),
            Datatype::I16 => bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f32).collect(),
            Datatype::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        }
    }
}

/// The header fields this reader honors.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dims: Dims,
    pub spacing: Spacing,
    pub datatype: Datatype,
    pub vox_offset: usize,
    pub scl_slope: f32,
    pub scl_inter: f32,
    /// `true` for `n+1` (single file), `false` for `ni1` (.hdr/.img pair).
    pub single_file: bool,
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

impl NiftiHeader {
    pub fn parse(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_SIZE {
            return Err(Error::SizeMismatch { expected: HEADER_SIZE, actual: b.len() });
        }
        let sizeof_hdr = i32_at(b, 0);
        if sizeof_hdr != HEADER_SIZE as i32 {
            let msg = if i32::from_be_bytes([b[0], b[1], b[2], b[3]]) == HEADER_SIZE as i32 {
                "big-endian files are not supported".to_string()
            } else {
                format!("expected 348, found {sizeof_hdr}")
            };
            return Err(Error::format("sizeof_hdr", msg));
        }
        let single_file = match &b[344..348] {
            b"n+1\0" => true,
            b"ni1\0" => false,
            other => return Err(Error::format("magic", format!("unrecognized magic {other:?}"))),
        };
        let ndim = i16_at(b, 40);
        if ndim != 3 {
            return Err(Error::format("dim[0]", format!("unsupported dimensionality {ndim}")));
        }
        let mut dims = [0usize; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            let v = i16_at(b, 42 + 2 * a);
            if v < 1 {
                return Err(Error::format(format!("dim[{}]", a + 1), format!("must be >= 1, found {v}")));
            }
            *d = v as usize;
        }
        let datatype = match i16_at(b, 70) {
            DT_UINT8 => Datatype::U8,
            DT_INT16 => Datatype::I16,
            DT_FLOAT32 => Datatype::F32,
            other => return Err(Error::format("datatype", format!("unsupported datatype code {other}"))),
        };
        let bitpix = i16_at(b, 72);
        if bitpix != datatype.bitpix() {
            return Err(Error::format("bitpix", format!("{bitpix} does not match datatype {datatype:?}")));
        }
        let mut spacing = [0f64; 3];
        for (a, s) in spacing.iter_mut().enumerate() {
            let v = f32_at(b, 80 + 4 * a) as f64;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::format(format!("pixdim[{}]", a + 1), format!("must be > 0, found {v}")));
            }
            *s = v;
        }
        let vox_offset = f32_at(b, 108);
        if !(vox_offset >= 0.0 && vox_offset.is_finite()) {
            return Err(Error::format("vox_offset", format!("invalid value {vox_offset}")));
        }
        let vox_offset = vox_offset as usize;
        if single_file && vox_offset < HEADER_SIZE {
            return Err(Error::format("vox_offset", format!("{vox_offset} overlaps the header")));
        }
        Ok(Self {
            dims,
            spacing,
            datatype,
            vox_offset,
            scl_slope: f32_at(b, 112),
            scl_inter: f32_at(b, 116),
            single_file,
        })
    }

    /// Intensity scaling, identity when the slope is zero or absent.
    pub fn scaling(&self) -> Option<(f32, f32)> {
        let slope = self.scl_slope;
        if slope == 0.0 || !slope.is_finite() {
            return None;
        }
        let inter = if self.scl_inter.is_finite() { self.scl_inter } else { 0.0 };
        if slope == 1.0 && inter == 0.0 {
            None
        } else {
            Some((slope, inter))
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = vec![0u8; SINGLE_FILE_OFFSET];
        b[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
        b[38] = b'r';
        b[40..42].copy_from_slice(&3i16.to_le_bytes());
        for a in 0..3 {
            b[42 + 2 * a..44 + 2 * a].copy_from_slice(&(self.dims[a] as i16).to_le_bytes());
        }
        for a in 3..7 {
            b[42 + 2 * a..44 + 2 * a].copy_from_slice(&1i16.to_le_bytes());
        }
        b[70..72].copy_from_slice(&self.datatype.code().to_le_bytes());
        b[72..74].copy_from_slice(&self.datatype.bitpix().to_le_bytes());
        b[76..80].copy_from_slice(&1f32.to_le_bytes());
        for a in 0..3 {
            b[80 + 4 * a..84 + 4 * a].copy_from_slice(&(self.spacing[a] as f32).to_le_bytes());
        }
        b[108..112].copy_from_slice(&(SINGLE_FILE_OFFSET as f32).to_le_bytes());
        b[112..116].copy_from_slice(&self.scl_slope.to_le_bytes());
        b[116..120].copy_from_slice(&self.scl_inter.to_le_bytes());
        // xyzt_units: millimeters
        b[123] = 2;
        b[344..348].copy_from_slice(b"n+1\0");
        b
    }
}

/// Raw voxel samples (after intensity scaling) plus the grid description.
#[derive(Debug, Clone)]
pub struct NiftiData {
    pub header: NiftiHeader,
    pub samples: Vec<f32>,
}

fn image_path(path: &Path) -> PathBuf {
    path.with_extension("img")
}

pub fn read(path: &Path) -> Result<NiftiData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = NiftiHeader::parse(&bytes)?;
    let n = header.dims.iter().product::<usize>();
    let need = n * header.datatype.bytes();
    let owned;
    let payload: &[u8] = if header.single_file {
        &bytes[header.vox_offset.min(bytes.len())..]
    } else {
        let img = image_path(path);
        owned = std::fs::read(&img).map_err(|e| Error::io(&img, e))?;
        &owned[header.vox_offset.min(owned.len())..]
    };
    if payload.len() < need {
        return Err(Error::SizeMismatch { expected: need, actual: payload.len() });
    }
    let mut samples = header.datatype.decode(&payload[..need]);
    if let Some((slope, inter)) = header.scaling() {
        for v in &mut samples {
            *v = *v * slope + inter;
        }
    }
    Ok(NiftiData { header, samples })
}

/// Writes a single-file `.nii` with the given raw little-endian payload.
pub fn write(path: &Path, dims: Dims, spacing: Spacing, datatype: Datatype, payload: &[u8]) -> Result<()> {
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::format("dim", format!("{dims:?} exceeds the NIfTI-1 limit")));
    }
    let header = NiftiHeader {
        dims,
        spacing,
        datatype,
        vox_offset: SINGLE_FILE_OFFSET,
        scl_slope: 0.0,
        scl_inter: 0.0,
        single_file: true,
    };
    let mut bytes = header.encode();
    bytes.extend_from_slice(payload);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
