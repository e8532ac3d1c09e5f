//! Prompts derived from ground truth: the bbox and point settings, and the
//! simulated edit loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::dice;
pub use crate::pipeline::{EditPoint, Sign};
use crate::segment::BBox;
use crate::volume::MaskVolume;

pub const BBOX_MARGIN_PX: usize = 15;
pub const MAX_EDITS: usize = 4;

fn non_empty(gt: &MaskVolume) -> Result<()> {
    if gt.is_empty() {
        Err(Error::contract("ground-truth mask is empty"))
    } else {
        Ok(())
    }
}

/// Median occupied slice (lower of the two middle ones) and the slice's
/// tight bounds grown by [`BBOX_MARGIN_PX`], clamped to the slice.
pub fn gt_bbox_prompt(gt: &MaskVolume) -> Result<(usize, BBox)> {
    non_empty(gt)?;
    let zs = gt.occupied_slices();
    let z = zs[(zs.len() - 1) / 2];
    let (x0, y0, x1, y1) = gt.slice(z).bounds().expect("occupied slice");
    let [nx, ny, _] = gt.dims();
    let m = BBOX_MARGIN_PX;
    Ok((z, BBox::new(x0.saturating_sub(m), y0.saturating_sub(m), (x1 + m).min(nx - 1), (y1 + m).min(ny - 1))))
}

/// In-mask voxel nearest (in mm) to `target`; ties go to the smallest
/// `(z, y, x)`.
pub fn nearest_in_mask(mask: &MaskVolume, target: [f64; 3]) -> Option<[usize; 3]> {
    let s = mask.spacing();
    let mut best: Option<(f64, [usize; 3])> = None;
    // points() runs in (z, y, x) order, so strict improvement keeps the
    // lexicographically first of equally near voxels.
    for p in mask.points() {
        let d: f64 = (0..3).map(|a| ((p[a] as f64 - target[a]) * s[a]).powi(2)).sum();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p)
}

/// Barycenter rounded to the nearest voxel, or the nearest in-mask voxel
/// to that when it falls outside.
pub fn snapped_barycenter(mask: &MaskVolume) -> Option<[usize; 3]> {
    let c = mask.barycenter()?;
    let r = c.map(|v| v.round());
    let p = r.map(|v| v as usize);
    if mask.get(p[0], p[1], p[2]) {
        Some(p)
    } else {
        nearest_in_mask(mask, r)
    }
}

pub fn gt_point_prompt(gt: &MaskVolume) -> Result<[usize; 3]> {
    non_empty(gt)?;
    Ok(snapped_barycenter(gt).expect("non-empty mask"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditAttempt {
    pub edit: EditPoint,
    pub dice_before: f64,
    pub dice_after: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditTrace {
    pub attempts: Vec<EditAttempt>,
}

impl EditTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &EditPoint> {
        self.attempts.iter().filter(|a| a.accepted).map(|a| &a.edit)
    }

    pub fn n_accepted(&self) -> usize {
        self.accepted().count()
    }
}

/// Up to [`MAX_EDITS`] corrective clicks at the barycenter of the larger
/// error region (false negatives win ties). An edit is kept only if it
/// raises DICE; the first rejected edit ends the loop.
pub fn simulate_edits(
    gt: &MaskVolume,
    initial_pred: &MaskVolume,
    mut re_segment: impl FnMut(&[EditPoint]) -> Result<MaskVolume>,
) -> Result<(MaskVolume, EditTrace)> {
    gt.check_same_grid(initial_pred)?;
    let mut pred = initial_pred.clone();
    let mut current = dice(gt, &pred)?;
    let mut accepted: Vec<EditPoint> = Vec::new();
    let mut trace = EditTrace::default();
    for i in 0..MAX_EDITS {
        let fn_region = gt.difference(&pred);
        let fp_region = pred.difference(gt);
        let (nf, np) = (fn_region.count(), fp_region.count());
        if nf == 0 && np == 0 {
            break;
        }
        let (region, sign) = if nf >= np { (&fn_region, Sign::Positive) } else { (&fp_region, Sign::Negative) };
        let position = snapped_barycenter(region).expect("non-empty error region");
        let edit = EditPoint { position, sign };
        accepted.push(edit);
        let next = re_segment(&accepted).map_err(|e| e.context(format!("edit {}", i + 1)))?;
        gt.check_same_grid(&next)?;
        let after = dice(gt, &next)?;
        let ok = after > current;
        trace.attempts.push(EditAttempt { edit, dice_before: current, dice_after: after, accepted: ok });
        if !ok {
            accepted.pop();
            break;
        }
        pred = next;
        current = after;
    }
    Ok((pred, trace))
}
