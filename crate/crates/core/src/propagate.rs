//! Autoregressive propagation of a 2D mask along z.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::pipeline::{EditPoint, Sign};
use crate::segment::{prior_seeds, BandStats, Prompt2D, Segmenter};
use crate::volume::{CtVolume, HuSlice, Mask2D, MaskVolume, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub min_area_voxels: usize,
    pub min_slice_overlap_dice: f64,
    pub max_slices_per_direction: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { min_area_voxels: 3, min_slice_overlap_dice: 0.10, max_slices_per_direction: 512 }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_area_voxels < 1 {
            return Err(Error::contract("min_area_voxels must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.min_slice_overlap_dice) {
            return Err(Error::contract("min_slice_overlap_dice must be in [0, 1]"));
        }
        if self.max_slices_per_direction < 1 {
            return Err(Error::contract("max_slices_per_direction must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// First or last slice of the volume reached.
    VolumeEdge,
    /// The segmenter returned an empty mask.
    ObjectBoundary,
    /// Non-empty mask below `min_area_voxels`.
    MinArea,
    /// Overlap with the previous slice below `min_slice_overlap_dice`.
    LowOverlap,
    /// `max_slices_per_direction` slices accepted.
    SliceCap,
    /// The segmenter hit its area cap.
    Runaway,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::VolumeEdge => "volume_edge",
            Self::ObjectBoundary => "object_boundary",
            Self::MinArea => "min_area",
            Self::LowOverlap => "low_overlap",
            Self::SliceCap => "slice_cap",
            Self::Runaway => "runaway",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub mask: MaskVolume,
    /// Stop reason for increasing z.
    pub stop_up: StopReason,
    /// Stop reason for decreasing z.
    pub stop_down: StopReason,
    pub calls: usize,
}

fn dice2(a: &Mask2D, b: &Mask2D) -> f64 {
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return 1.0;
    }
    2.0 * a.intersection_count(b) as f64 / (na + nb) as f64
}

fn reference(slice: &HuSlice, mask: &Mask2D) -> Option<BandStats> {
    BandStats::under(slice, &prior_seeds(mask))
}

/// Adds the edit points lying on slice `z` to `prompt`.
pub fn add_edits(prompt: &mut Prompt2D, edits: &[EditPoint], z: usize) {
    for e in edits.iter().filter(|e| e.position[2] == z) {
        let p = (e.position[0], e.position[1]);
        match e.sign {
            Sign::Positive => prompt.positive.push(p),
            Sign::Negative => prompt.negative.push(p),
        }
    }
}

pub fn propagate(
    vol: &CtVolume,
    z0: usize,
    m0: &Mask2D,
    segmenter: &mut dyn Segmenter,
    cfg: &PropagationConfig,
    window: WindowSpec,
) -> Result<PropagationResult> {
    propagate_with_edits(vol, z0, m0, segmenter, cfg, window, &[])
}

/// As [`propagate`], with edit points injected on their own slices.
pub fn propagate_with_edits(
    vol: &CtVolume,
    z0: usize,
    m0: &Mask2D,
    segmenter: &mut dyn Segmenter,
    cfg: &PropagationConfig,
    window: WindowSpec,
    edits: &[EditPoint],
) -> Result<PropagationResult> {
    cfg.validate()?;
    let [nx, ny, nz] = vol.dims();
    if z0 >= nz {
        return Err(Error::Index(format!("start slice {z0} outside 0..{nz}")));
    }
    if m0.width() != nx || m0.height() != ny {
        return Err(Error::contract(format!(
            "initial mask is {}x{}, volume slice is {nx}x{ny}",
            m0.width(),
            m0.height()
        )));
    }
    if m0.is_empty() {
        return Err(Error::contract("cannot propagate an empty initial mask"));
    }
    let mut mask = MaskVolume::empty(vol.dims(), vol.spacing());
    mask.set_slice(z0, m0);
    let start = vol.hu_slice(z0, window)?;
    let mut calls = 0;
    let mut stops = [StopReason::VolumeEdge; 2];
    for (d, stop) in stops.iter_mut().enumerate() {
        let up = d == 0;
        let mut prev = m0.clone();
        let mut prev_ref = reference(&start, m0);
        let mut step = 1usize;
        *stop = loop {
            let z = if up { z0 + step } else { z0.wrapping_sub(step) };
            if (up && z >= nz) || (!up && step > z0) {
                break StopReason::VolumeEdge;
            }
            if step > cfg.max_slices_per_direction {
                break StopReason::SliceCap;
            }
            let slice = vol.hu_slice(z, window)?;
            let mut prompt = Prompt2D::prior(prev.clone(), prev_ref);
            add_edits(&mut prompt, edits, z);
            calls += 1;
            let seg = segmenter.segment(&slice, &prompt).map_err(|e| e.context(format!("slice {z}")))?;
            if seg.runaway {
                break StopReason::Runaway;
            }
            let area = seg.mask.count();
            if area == 0 {
                break StopReason::ObjectBoundary;
            }
            if area < cfg.min_area_voxels {
                break StopReason::MinArea;
            }
            if dice2(&seg.mask, &prev) < cfg.min_slice_overlap_dice {
                break StopReason::LowOverlap;
            }
            mask.set_slice(z, &seg.mask);
            prev_ref = reference(&slice, &seg.mask);
            prev = seg.mask;
            step += 1;
        };
    }
    debug_assert!(metrics::volume_ml(&mask) > 0.0);
    Ok(PropagationResult { mask, stop_up: stops[0], stop_down: stops[1], calls })
}
