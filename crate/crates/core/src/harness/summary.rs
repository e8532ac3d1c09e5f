//! Grouped summaries of evaluation rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::run::CaseResult;
use crate::stats::SummaryStats;

pub const SPHERICITY_SPLIT: f64 = 0.6;
pub const LONG_AXIS_SPLIT_MM: f64 = 15.0;
pub const VOLUME_SPLIT_ML: f64 = 1.0;

/// Columns summarized for every group.
pub const COLUMNS: [&str; 4] = ["dice", "abs_err_mm", "rel_err", "long_axis_pred_mm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    LesionType,
    Mode,
    /// Ground-truth sphericity above 0.6.
    Sphericity,
    /// Ground-truth long axis above 15 mm.
    LongAxis,
    /// Ground-truth volume above 1 mL.
    Volume,
}

impl GroupBy {
    pub const ALL: [GroupBy; 5] = [Self::LesionType, Self::Mode, Self::Sphericity, Self::LongAxis, Self::Volume];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::LesionType => "lesion_type",
            Self::Mode => "mode",
            Self::Sphericity => "sphericity",
            Self::LongAxis => "long_axis",
            Self::Volume => "volume",
        }
    }

    /// Group key of a successful row.
    pub fn key(&self, r: &CaseResult) -> Option<String> {
        let split = |v: Option<f64>, t: f64, name: &str| {
            v.map(|v| if v > t { format!("{name}>{t}") } else { format!("{name}<={t}") })
        };
        match self {
            Self::LesionType => Some(r.lesion_type.clone()),
            Self::Mode => Some(r.mode.as_str().to_string()),
            Self::Sphericity => split(r.sphericity, SPHERICITY_SPLIT, "sphericity"),
            Self::LongAxis => split(r.long_axis_gt_mm, LONG_AXIS_SPLIT_MM, "long_axis_mm"),
            Self::Volume => split(r.volume_ml, VOLUME_SPLIT_ML, "volume_ml"),
        }
    }
}

pub fn column(r: &CaseResult, name: &str) -> Option<f64> {
    match name {
        "dice" => r.dice,
        "abs_err_mm" => r.abs_err_mm,
        "rel_err" => r.rel_err,
        "long_axis_pred_mm" => r.long_axis_pred_mm,
        "long_axis_gt_mm" => r.long_axis_gt_mm,
        "volume_ml" => r.volume_ml,
        "sphericity" => r.sphericity,
        "n_edits" => Some(r.n_edits as f64),
        _ => None,
    }
}

/// One row per (group, column); groups in key order. Failed rows are
/// skipped; groups without values are omitted with a warning.
pub fn summarize(results: &[CaseResult], group_by: GroupBy) -> Vec<SummaryStats> {
    let mut groups: BTreeMap<String, Vec<&CaseResult>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.is_ok()) {
        if let Some(k) = group_by.key(r) {
            groups.entry(k).or_default().push(r);
        }
    }
    let mut out = Vec::new();
    for (key, rows) in &groups {
        for col in COLUMNS {
            let values: Vec<f64> = rows.iter().filter_map(|r| column(r, col)).collect();
            match SummaryStats::of(key.clone(), col, &values) {
                Some(s) => out.push(s),
                None => log::warn!("group {key} has no values for {col}; omitted"),
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub segmenter: String,
    pub seed: u64,
    pub n_cases: usize,
    pub n_failed: usize,
    pub groups: BTreeMap<String, Vec<SummaryStats>>,
}

impl RunSummary {
    pub fn new(results: &[CaseResult], mode: &str, segmenter: &str, seed: u64) -> Self {
        let groups = GroupBy::ALL.iter().map(|g| (g.as_str().to_string(), summarize(results, *g))).collect();
        Self {
            mode: mode.to_string(),
            segmenter: segmenter.to_string(),
            seed,
            n_cases: results.len(),
            n_failed: results.iter().filter(|r| !r.is_ok()).count(),
            groups,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::Mode;

    fn row(id: &str, ty: &str, dice: f64, sph: f64) -> CaseResult {
        CaseResult {
            id: id.into(),
            lesion_type: ty.into(),
            mode: Mode::Point,
            dice: Some(dice),
            long_axis_pred_mm: Some(20.0),
            long_axis_gt_mm: Some(20.0),
            abs_err_mm: Some(0.0),
            rel_err: Some(0.0),
            volume_ml: Some(2.0),
            sphericity: Some(sph),
            n_edits: 0,
            stop_reasons: String::new(),
            wall_time_s: None,
            error: None,
        }
    }

    #[test]
    fn groups_by_type_with_linear_quantiles() {
        let rows: Vec<_> =
            [1.0, 2.0, 3.0, 4.0].iter().enumerate().map(|(i, &d)| row(&i.to_string(), "a", d, 0.9)).collect();
        let s = summarize(&rows, GroupBy::LesionType);
        let dice = s.iter().find(|s| s.column == "dice").unwrap();
        assert_eq!((dice.group.as_str(), dice.n), ("a", 4));
        assert_eq!((dice.median, dice.q1, dice.q3), (2.5, 1.75, 3.25));
    }

    #[test]
    fn sphericity_split_counts() {
        let rows =
            vec![row("1", "a", 1.0, 0.95), row("2", "a", 1.0, 0.5), row("3", "a", 1.0, 0.6), row("4", "a", 1.0, 0.7)];
        let s = summarize(&rows, GroupBy::Sphericity);
        let n = |g: &str| s.iter().find(|s| s.group == g && s.column == "dice").unwrap().n;
        assert_eq!(n("sphericity>0.6"), 2);
        assert_eq!(n("sphericity<=0.6"), 2);
    }

    #[test]
    fn failed_rows_skipped() {
        let mut bad = row("x", "b", 0.0, 0.9);
        bad.error = Some("boom".into());
        bad.dice = None;
        let s = summarize(&[bad], GroupBy::LesionType);
        assert!(s.is_empty());
    }
}
