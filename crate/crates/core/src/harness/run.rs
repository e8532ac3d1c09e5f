//! Per-case evaluation in the three prompt settings.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{CaseEntry, LoadedCase};
use crate::error::{Error, Result};
use crate::metrics;
use crate::pipeline::{run_pipeline, InitialPrompt, PipelineConfig, PipelineOutput};
use crate::prompt_sim::{gt_bbox_prompt, gt_point_prompt, simulate_edits};
use crate::segment::{Segmenter, SegmenterChoice, SegmenterConfig};
use crate::volume::MaskVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Point,
    #[serde(rename = "bbox")]
    BBox,
    PointEdit,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Point => "point",
            Self::BBox => "bbox",
            Self::PointEdit => "point_edit",
        }
    }

    /// Accepts `point`, `bbox`, `point-edit` and `point_edit`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Self::Point),
            "bbox" => Ok(Self::BBox),
            "point-edit" | "point_edit" => Ok(Self::PointEdit),
            _ => Err(Error::contract(format!("unknown mode {s:?}; expected point, bbox or point-edit"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub segmenter: SegmenterConfig,
    /// Fill `wall_time_s`; off by default so reports are reproducible.
    pub record_timing: bool,
}

/// One evaluation row. Volume and sphericity describe the ground-truth
/// lesion (they drive the grouping predicates); `error` is set on failed
/// rows, which leave the measurement fields empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub lesion_type: String,
    pub mode: Mode,
    pub dice: Option<f64>,
    pub long_axis_pred_mm: Option<f64>,
    pub long_axis_gt_mm: Option<f64>,
    pub abs_err_mm: Option<f64>,
    pub rel_err: Option<f64>,
    pub volume_ml: Option<f64>,
    pub sphericity: Option<f64>,
    pub n_edits: usize,
    pub stop_reasons: String,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
}

impl CaseResult {
    pub fn failed(entry: &CaseEntry, mode: Mode, err: &Error) -> Self {
        Self {
            id: entry.id.clone(),
            lesion_type: entry.lesion_type.clone(),
            mode,
            dice: None,
            long_axis_pred_mm: None,
            long_axis_gt_mm: None,
            abs_err_mm: None,
            rel_err: None,
            volume_ml: None,
            sphericity: None,
            n_edits: 0,
            stop_reasons: String::new(),
            wall_time_s: None,
            error: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn stops(out: &PipelineOutput) -> String {
    format!("up={};down={}", out.stops.0, out.stops.1)
}

/// Runs one prompt setting on a loaded case.
pub fn evaluate(case: &LoadedCase, mode: Mode, segmenter: &mut dyn Segmenter, cfg: &RunConfig) -> Result<CaseResult> {
    let gt = &case.gt;
    let initial = match mode {
        Mode::Point | Mode::PointEdit => {
            let [x, y, z] = gt_point_prompt(gt)?;
            InitialPrompt::Point { x, y, z }
        }
        Mode::BBox => {
            let (z, bbox) = gt_bbox_prompt(gt)?;
            InitialPrompt::BBox { z, bbox }
        }
    };
    let first = run_pipeline(&case.ct, &initial, &[], segmenter, &cfg.pipeline)?;
    let (out, n_edits) = if mode == Mode::PointEdit {
        let mut last = first.clone();
        let (_, trace) = simulate_edits(gt, &first.mask, |edits| {
            match run_pipeline(&case.ct, &initial, edits, segmenter, &cfg.pipeline) {
                Ok(out) => {
                    let mask = out.mask.clone();
                    last = out;
                    Ok(mask)
                }
                // An edit that erases the lesion scores DICE 0 and is rejected.
                Err(e) if matches!(e.root(), Error::NoLesion(_)) => Ok(MaskVolume::empty(gt.dims(), gt.spacing())),
                Err(e) => Err(e),
            }
        })?;
        let n = trace.n_accepted();
        let out = if trace.attempts.last().is_some_and(|a| a.accepted) {
            last
        } else {
            // The last attempt was rejected: replay the accepted edits.
            let accepted: Vec<_> = trace.accepted().copied().collect();
            if accepted.is_empty() {
                first
            } else {
                run_pipeline(&case.ct, &initial, &accepted, segmenter, &cfg.pipeline)?
            }
        };
        (out, n)
    } else {
        (first, 0)
    };
    let dice = metrics::dice(gt, &out.mask)?;
    let pred_axis = metrics::long_axis(&out.mask)?.length_mm;
    let gt_axis = metrics::long_axis(gt)?.length_mm;
    let (abs_err, rel_err) = metrics::measurement_errors(pred_axis, gt_axis)?;
    Ok(CaseResult {
        id: case.entry.id.clone(),
        lesion_type: case.entry.lesion_type.clone(),
        mode,
        dice: Some(dice),
        long_axis_pred_mm: Some(pred_axis),
        long_axis_gt_mm: Some(gt_axis),
        abs_err_mm: Some(abs_err),
        rel_err: Some(rel_err),
        volume_ml: Some(metrics::volume_ml(gt)),
        sphericity: Some(metrics::sphericity(gt)?),
        n_edits,
        stop_reasons: stops(&out),
        wall_time_s: None,
        error: None,
    })
}

/// Loads and evaluates a case; any failure becomes a failed row.
pub fn run_case(
    entry: &CaseEntry,
    base: &Path,
    mode: Mode,
    segmenter: &mut dyn Segmenter,
    cfg: &RunConfig,
) -> CaseResult {
    let start = Instant::now();
    let result = entry.load(base).and_then(|case| evaluate(&case, mode, segmenter, cfg));
    let mut row = match result {
        Ok(r) => r,
        Err(e) => {
            log::warn!("case {} failed: {e}", entry.id);
            CaseResult::failed(entry, mode, &e)
        }
    };
    if cfg.record_timing {
        row.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    row
}

/// Evaluates all cases in parallel, one segmenter instance per worker;
/// rows come back sorted by id.
pub fn run_all(
    entries: &[CaseEntry],
    base: &Path,
    mode: Mode,
    choice: &SegmenterChoice,
    cfg: &RunConfig,
) -> Vec<CaseResult> {
    let mut rows: Vec<CaseResult> = entries
        .par_iter()
        .map_init(
            || choice.instantiate(cfg.segmenter).map_err(|e| e.to_string()),
            |seg, entry| match seg {
                Ok(s) => run_case(entry, base, mode, s.as_mut(), cfg),
                Err(msg) => CaseResult::failed(entry, mode, &Error::contract(format!("segmenter unavailable: {msg}"))),
            },
        )
        .collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    rows
}
