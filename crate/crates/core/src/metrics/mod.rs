//! Lesion measures: overlap, volume, surface area, sphericity, axial
//! diameters and RECIST eligibility.

pub mod axis;
pub mod mesh;
mod tables;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::MaskVolume;
pub use mesh::{marching_cubes, Mesh};

/// Smoothing applied to the marching-cubes mesh before measuring area.
pub const TAUBIN_ITERATIONS: usize = 20;
pub const TAUBIN_LAMBDA: f64 = 0.5;
pub const TAUBIN_MU: f64 = -0.53;

pub fn dice(a: &MaskVolume, b: &MaskVolume) -> Result<f64> {
    a.check_same_grid(b)?;
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * a.intersection_count(b) as f64 / (na + nb) as f64)
}

pub fn voxel_volume_mm3(mask: &MaskVolume) -> f64 {
    let s = mask.spacing();
    s[0] * s[1] * s[2]
}

pub fn volume_ml(mask: &MaskVolume) -> f64 {
    mask.count() as f64 * voxel_volume_mm3(mask) / 1000.0
}

/// `π^(1/3) (6V)^(2/3) / A`, V in mm³ and A in mm².
pub fn sphericity_from(volume_mm3: f64, area_mm2: f64) -> f64 {
    std::f64::consts::PI.cbrt() * (6.0 * volume_mm3).powf(2.0 / 3.0) / area_mm2
}

fn non_empty(mask: &MaskVolume, what: &str) -> Result<()> {
    if mask.is_empty() {
        Err(Error::contract(format!("{what} of an empty mask")))
    } else {
        Ok(())
    }
}

/// Area of the marching-cubes isosurface after Taubin smoothing.
///
/// The raw mesh of a binary field has a staircase bias of roughly +8% on
/// spheres; smoothing removes most of it. Use [`marching_cubes`] directly
/// for the unsmoothed surface.
pub fn surface_area_mm2(mask: &MaskVolume) -> Result<f64> {
    non_empty(mask, "surface area")?;
    let mut m = marching_cubes(mask);
    m.taubin(TAUBIN_ITERATIONS, TAUBIN_LAMBDA, TAUBIN_MU);
    Ok(m.area())
}

pub fn sphericity(mask: &MaskVolume) -> Result<f64> {
    let area = surface_area_mm2(mask)?;
    Ok(sphericity_from(volume_ml(mask) * 1000.0, area))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongAxis {
    pub length_mm: f64,
    pub endpoints: [[usize; 3]; 2],
    pub z: usize,
}

/// Longest in-plane chord between boundary voxel centers over all axial
/// slices. Ties go to the lower slice, then to the lexicographically
/// smaller `((x, y), (x, y))` endpoint pair.
pub fn long_axis(mask: &MaskVolume) -> Result<LongAxis> {
    non_empty(mask, "long axis")?;
    let [sx, sy, _] = mask.spacing();
    let mut best: Option<(usize, f64, (axis::Pt, axis::Pt))> = None;
    for z in mask.occupied_slices() {
        let pts = axis::boundary_points(&mask.slice(z));
        if let Some((d2, pair)) = axis::diameter(&pts, sx, sy) {
            if best.is_none_or(|(_, bd, _)| d2 > bd) {
                best = Some((z, d2, pair));
            }
        }
    }
    let (z, d2, (a, b)) = best.expect("non-empty mask has an occupied slice");
    let p = |q: axis::Pt| [q.0 as usize, q.1 as usize, z];
    Ok(LongAxis { length_mm: d2.sqrt(), endpoints: [p(a), p(b)], z })
}

/// Extent of the boundary perpendicular to the long axis, on its slice.
pub fn short_axis(mask: &MaskVolume, long: &LongAxis) -> f64 {
    let [sx, sy, _] = mask.spacing();
    let pts = axis::boundary_points(&mask.slice(long.z));
    let [a, b] = long.endpoints.map(|e| (e[0] as i64, e[1] as i64));
    axis::perpendicular_width(&pts, a, b, sx, sy)
}

pub fn short_axis_mm(mask: &MaskVolume) -> Result<f64> {
    let long = long_axis(mask)?;
    Ok(short_axis(mask, &long))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphologyReport {
    pub volume_ml: f64,
    pub surface_area_mm2: f64,
    pub sphericity: f64,
    pub long_axis_mm: f64,
    pub short_axis_mm: f64,
    pub long_axis_endpoints: [[usize; 3]; 2],
    pub long_axis_slice: usize,
}

pub fn morphology(mask: &MaskVolume) -> Result<MorphologyReport> {
    let volume_ml = volume_ml(mask);
    let surface_area_mm2 = surface_area_mm2(mask)?;
    let long = long_axis(mask)?;
    Ok(MorphologyReport {
        volume_ml,
        surface_area_mm2,
        sphericity: sphericity_from(volume_ml * 1000.0, surface_area_mm2),
        long_axis_mm: long.length_mm,
        short_axis_mm: short_axis(mask, &long),
        long_axis_endpoints: long.endpoints,
        long_axis_slice: long.z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionRecord {
    pub id: String,
    pub is_lymph_node: bool,
    pub report: MorphologyReport,
}

pub const MIN_LESION_LONG_AXIS_MM: f64 = 10.0;
pub const MIN_NODE_SHORT_AXIS_MM: f64 = 15.0;

pub fn recist_eligible(rec: &LesionRecord) -> bool {
    if rec.is_lymph_node {
        rec.report.short_axis_mm >= MIN_NODE_SHORT_AXIS_MM
    } else {
        rec.report.long_axis_mm >= MIN_LESION_LONG_AXIS_MM
    }
}

/// `(|pred - gt|, |pred - gt| / gt)`.
pub fn measurement_errors(pred_mm: f64, gt_mm: f64) -> Result<(f64, f64)> {
    if !(gt_mm > 0.0) {
        return Err(Error::contract(format!("ground-truth measurement must be > 0, got {gt_mm}")));
    }
    let abs = (pred_mm - gt_mm).abs();
    Ok((abs, abs / gt_mm))
}
