//! Prompt to 3D mask: initial 2D segmentation, propagation, and edit
//! replay.
//!
//! The pipeline is a pure function of (volume, initial prompt, edits,
//! segmenter, config). Edits are applied as prompt points on their own
//! slice. Positive edits not 3D-connected to the lesion grown from the
//! initial slice start their own propagation, merged into the result.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagate::{add_edits, propagate_with_edits, PropagationConfig, StopReason};
use crate::segment::{BBox, Prompt2D, Segmenter};
use crate::volume::{CtVolume, MaskVolume, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditPoint {
    /// `[x, y, z]` voxel; the target slice is `z`.
    pub position: [usize; 3],
    pub sign: Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialPrompt {
    Point {
        x: usize,
        y: usize,
        z: usize,
    },
    #[serde(rename = "bbox")]
    BBox {
        z: usize,
        bbox: BBox,
    },
}

impl InitialPrompt {
    pub fn z(&self) -> usize {
        match *self {
            Self::Point { z, .. } | Self::BBox { z, .. } => z,
        }
    }

    fn prompt2d(&self) -> Prompt2D {
        match *self {
            Self::Point { x, y, .. } => Prompt2D::point(x, y),
            Self::BBox { bbox, .. } => Prompt2D::bbox(bbox),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: WindowSpec,
    pub propagation: PropagationConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub mask: MaskVolume,
    /// `(up, down)` of the main sweep.
    pub stops: (StopReason, StopReason),
    pub calls: usize,
}

fn check_point(vol: &CtVolume, p: [usize; 3]) -> Result<()> {
    let d = vol.dims();
    if p[0] >= d[0] || p[1] >= d[1] || p[2] >= d[2] {
        return Err(Error::Index(format!("point {p:?} outside volume {d:?}")));
    }
    Ok(())
}

/// Voxels of `mask` 6-connected to its occupied pixels on slice `z0`.
fn connected_to_slice(mask: &MaskVolume, z0: usize) -> MaskVolume {
    let [nx, ny, nz] = mask.dims();
    let mut out = MaskVolume::empty(mask.dims(), mask.spacing());
    let mut stack: Vec<[usize; 3]> = mask.slice(z0).points().map(|(x, y)| [x, y, z0]).collect();
    for &[x, y, z] in &stack {
        out.set(x, y, z, true);
    }
    while let Some([x, y, z]) = stack.pop() {
        let mut visit = |p: [usize; 3]| {
            if mask.get(p[0], p[1], p[2]) && !out.get(p[0], p[1], p[2]) {
                out.set(p[0], p[1], p[2], true);
                stack.push(p);
            }
        };
        if x > 0 {
            visit([x - 1, y, z]);
        }
        if x + 1 < nx {
            visit([x + 1, y, z]);
        }
        if y > 0 {
            visit([x, y - 1, z]);
        }
        if y + 1 < ny {
            visit([x, y + 1, z]);
        }
        if z > 0 {
            visit([x, y, z - 1]);
        }
        if z + 1 < nz {
            visit([x, y, z + 1]);
        }
    }
    out
}

pub fn run_pipeline(
    vol: &CtVolume,
    initial: &InitialPrompt,
    edits: &[EditPoint],
    segmenter: &mut dyn Segmenter,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let z0 = initial.z();
    if let InitialPrompt::Point { x, y, z } = *initial {
        check_point(vol, [x, y, z])?;
    }
    for e in edits {
        check_point(vol, e.position)?;
    }
    let slice = vol.hu_slice(z0, cfg.window)?;
    let mut prompt = initial.prompt2d();
    add_edits(&mut prompt, edits, z0);
    let seg = segmenter.segment(&slice, &prompt).map_err(|e| e.context("initial slice"))?;
    if seg.runaway {
        return Err(Error::NoLesion(format!("segmentation of slice {z0} ran away")));
    }
    if seg.mask.is_empty() {
        return Err(Error::NoLesion(format!("empty segmentation on slice {z0}")));
    }
    let main = propagate_with_edits(vol, z0, &seg.mask, segmenter, &cfg.propagation, cfg.window, edits)?;
    let mut mask = main.mask;
    let mut calls = main.calls + 1;
    let mut reached = connected_to_slice(&mask, z0);
    for e in edits.iter().filter(|e| e.sign == Sign::Positive) {
        let [x, y, z] = e.position;
        if reached.get(x, y, z) {
            continue;
        }
        let slice = vol.hu_slice(z, cfg.window)?;
        let mut prompt = Prompt2D::default();
        add_edits(&mut prompt, edits, z);
        // This edit first so its neighborhood sets the band.
        prompt.positive.retain(|&p| p != (x, y));
        prompt.positive.insert(0, (x, y));
        let seg = segmenter.segment(&slice, &prompt).map_err(|err| err.context(format!("edit on slice {z}")))?;
        calls += 1;
        if seg.runaway || seg.mask.is_empty() {
            continue;
        }
        let sub = propagate_with_edits(vol, z, &seg.mask, segmenter, &cfg.propagation, cfg.window, edits)?;
        calls += sub.calls;
        mask.union_with(&sub.mask);
        reached = connected_to_slice(&mask, z0);
    }
    Ok(PipelineOutput { mask, stops: (main.stop_up, main.stop_down), calls })
}
