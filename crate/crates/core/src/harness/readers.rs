//! Simulated readers and inter-operator variability.
//!
//! A manual reader measures a perturbed copy of the ground truth: each
//! axial slice is eroded or dilated by a random radius, then both caliper
//! endpoints are displaced by Gaussian noise. An assisted reader draws a
//! jittered box around the ground truth and accepts the pipeline's
//! measurement.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{CaseEntry, LoadedCase};
use super::run::RunConfig;
use crate::error::{Error, Result};
use crate::metrics;
use crate::pipeline::{run_pipeline, InitialPrompt};
use crate::prompt_sim::gt_bbox_prompt;
use crate::rng::SplitMix64;
use crate::segment::{BBox, Segmenter, SegmenterChoice};
use crate::volume::{Mask2D, MaskVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterConfig {
    /// Largest per-slice erosion/dilation, voxels.
    pub morph_radius: usize,
    /// Standard deviation of each endpoint coordinate, mm.
    pub endpoint_sigma_mm: f64,
    /// Largest displacement of each bbox edge, pixels.
    pub bbox_jitter_px: usize,
    pub seed: u64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { morph_radius: 1, endpoint_sigma_mm: 1.0, bbox_jitter_px: 3, seed: 0 }
    }
}

impl JitterConfig {
    pub fn none() -> Self {
        Self { morph_radius: 0, endpoint_sigma_mm: 0.0, bbox_jitter_px: 0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.endpoint_sigma_mm >= 0.0) {
            return Err(Error::contract("endpoint_sigma_mm must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderMode {
    Manual,
    Assisted,
}

impl ReaderMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Manual => "manual",
            Self::Assisted => "assisted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderMeasurement {
    pub case_id: String,
    pub reader: String,
    pub mode: ReaderMode,
    pub long_axis_mm: f64,
}

fn id_hash(id: &str) -> u64 {
    // FNV-1a: stable across runs and platforms.
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn reader_rng(cfg: &JitterConfig, mode: ReaderMode, reader: usize, case_id: &str) -> SplitMix64 {
    SplitMix64::new(cfg.seed).split(mode as u64).split(reader as u64).split(id_hash(case_id))
}

fn morph(mask: &Mask2D, k: i64) -> Mask2D {
    let mut m = mask.clone();
    for _ in 0..k.unsigned_abs() {
        m = if k > 0 { m.dilated() } else { m.eroded() };
    }
    m
}

/// Long axis as measured by one manual reader.
pub fn manual_measurement(gt: &MaskVolume, cfg: &JitterConfig, rng: &mut SplitMix64) -> Result<f64> {
    let r = cfg.morph_radius as i64;
    let mut perturbed = MaskVolume::empty(gt.dims(), gt.spacing());
    for z in gt.occupied_slices() {
        let k = if r > 0 { rng.next_range(-r, r) } else { 0 };
        let s = gt.slice(z);
        let m = morph(&s, k);
        perturbed.set_slice(z, if m.is_empty() { &s } else { &m });
    }
    let axis = metrics::long_axis(&perturbed)?;
    let [sx, sy, _] = gt.spacing();
    let [a, b] = axis.endpoints;
    let mut jitter = |v: usize, s: f64| {
        let n = if cfg.endpoint_sigma_mm > 0.0 { cfg.endpoint_sigma_mm * rng.next_gaussian() } else { 0.0 };
        v as f64 * s + n
    };
    let (ax, ay, bx, by) = (jitter(a[0], sx), jitter(a[1], sy), jitter(b[0], sx), jitter(b[1], sy));
    Ok(((ax - bx).powi(2) + (ay - by).powi(2)).sqrt())
}

fn jitter_bbox(b: BBox, width: usize, height: usize, j: usize, rng: &mut SplitMix64) -> BBox {
    let j = j as i64;
    let mut d = || if j > 0 { rng.next_range(-j, j) } else { 0 };
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let x0 = clamp(b.x0 as i64 + d(), width);
    let y0 = clamp(b.y0 as i64 + d(), height);
    let x1 = clamp(b.x1 as i64 + d(), width).max((x0 + 1).min(width - 1));
    let y1 = clamp(b.y1 as i64 + d(), height).max((y0 + 1).min(height - 1));
    BBox::new(x0, y0, x1, y1)
}

/// Long axis as measured by one assisted reader.
pub fn assisted_measurement(
    case: &LoadedCase,
    cfg: &JitterConfig,
    rng: &mut SplitMix64,
    segmenter: &mut dyn Segmenter,
    run: &RunConfig,
) -> Result<f64> {
    let (z, b) = gt_bbox_prompt(&case.gt)?;
    let [nx, ny, _] = case.ct.dims();
    let bbox = jitter_bbox(b, nx, ny, cfg.bbox_jitter_px, rng);
    let out = run_pipeline(&case.ct, &InitialPrompt::BBox { z, bbox }, &[], segmenter, &run.pipeline)?;
    Ok(metrics::long_axis(&out.mask)?.length_mm)
}

/// Measurement table for `n_readers` readers in `mode`, sorted by
/// (case, reader). Failing cases are skipped with a warning.
pub fn simulate_readers(
    entries: &[CaseEntry],
    base: &Path,
    n_readers: usize,
    jitter: &JitterConfig,
    mode: ReaderMode,
    choice: &SegmenterChoice,
    run: &RunConfig,
) -> Result<Vec<ReaderMeasurement>> {
    if n_readers < 2 {
        return Err(Error::contract(format!("need at least 2 readers, got {n_readers}")));
    }
    jitter.validate()?;
    let per_case: Vec<Vec<ReaderMeasurement>> = entries
        .par_iter()
        .map_init(
            || choice.instantiate(run.segmenter).map_err(|e| e.to_string()),
            |seg, entry| {
                let mut attempt = || -> Result<Vec<ReaderMeasurement>> {
                    let case = entry.load(base)?;
                    (0..n_readers)
                        .map(|r| {
                            let mut rng = reader_rng(jitter, mode, r, &entry.id);
                            let mm = match mode {
                                ReaderMode::Manual => manual_measurement(&case.gt, jitter, &mut rng)?,
                                ReaderMode::Assisted => {
                                    let s = seg.as_mut().map_err(|m| Error::contract(m.clone()))?;
                                    assisted_measurement(&case, jitter, &mut rng, s.as_mut(), run)?
                                }
                            };
                            Ok(ReaderMeasurement {
                                case_id: entry.id.clone(),
                                reader: format!("reader{r}"),
                                mode,
                                long_axis_mm: mm,
                            })
                        })
                        .collect()
                };
                attempt().unwrap_or_else(|e| {
                    log::warn!("readers: case {} skipped: {e}", entry.id);
                    Vec::new()
                })
            },
        )
        .collect();
    let mut rows: Vec<_> = per_case.into_iter().flatten().collect();
    rows.sort_by(|a, b| (a.case_id.as_str(), a.reader.as_str()).cmp(&(b.case_id.as_str(), b.reader.as_str())));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variability {
    /// Mean absolute deviation from the per-lesion average, per operator.
    pub per_operator: BTreeMap<String, f64>,
    /// Mean over operators.
    pub overall: f64,
    /// Lesions measured by fewer than two operators.
    pub excluded: Vec<String>,
}

/// `measurements[lesion][operator] = mm`.
pub fn inter_operator_variability(measurements: &BTreeMap<String, BTreeMap<String, f64>>) -> Variability {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (lesion, ops) in measurements {
        if ops.len() < 2 {
            log::warn!("lesion {lesion} has {} operator(s); excluded", ops.len());
            excluded.push(lesion.clone());
            continue;
        }
        let avg = ops.values().sum::<f64>() / ops.len() as f64;
        for (op, m) in ops {
            let e = sums.entry(op.clone()).or_default();
            e.0 += (m - avg).abs();
            e.1 += 1;
        }
    }
    let per_operator: BTreeMap<String, f64> = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let overall =
        if per_operator.is_empty() { 0.0 } else { per_operator.values().sum::<f64>() / per_operator.len() as f64 };
    Variability { per_operator, overall, excluded }
}

/// Groups a measurement table into the lesion → operator map.
pub fn by_lesion(rows: &[ReaderMeasurement]) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in rows {
        out.entry(r.case_id.clone()).or_default().insert(r.reader.clone(), r.long_axis_mm);
    }
    out
}
