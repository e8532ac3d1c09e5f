//! Phantom suite to manifest to evaluation rows and reports.

use std::path::Path;

use lesionbench_core::harness::{self, CaseEntry, CaseManifest, GroupBy, Mode, RunConfig, RunSummary};
use lesionbench_core::phantom::{self, suite};
use lesionbench_core::segment::SegmenterChoice;

fn write_suite(dir: &Path, kind: suite::SuiteKind, count: usize, noise: f64) -> Vec<CaseEntry> {
    let spec = suite::SuiteSpec { kind, count, seed: 5, noise_sigma: noise };
    let cases: Vec<_> = suite::build(&spec).iter().map(|c| c.generate().unwrap()).collect();
    let path = phantom::emit_manifest(&cases, dir).unwrap();
    CaseManifest::load(path).unwrap().cases
}

#[test]
fn point_edit_never_loses_to_point() {
    let dir = tempfile::tempdir().unwrap();
    let entries = write_suite(dir.path(), suite::SuiteKind::Irregular, 10, 20.0);
    let cfg = RunConfig::default();
    let point = harness::run_all(&entries, dir.path(), Mode::Point, &SegmenterChoice::Builtin, &cfg);
    let edit = harness::run_all(&entries, dir.path(), Mode::PointEdit, &SegmenterChoice::Builtin, &cfg);
    for (p, e) in point.iter().zip(&edit) {
        assert_eq!(p.id, e.id);
        assert!(p.is_ok() && e.is_ok(), "{p:?} {e:?}");
        assert!(e.dice >= p.dice, "{}: {:?} < {:?}", p.id, e.dice, p.dice);
        assert!(e.n_edits <= 4);
        assert_eq!(p.n_edits, 0);
    }
}

#[test]
fn manifest_order_does_not_change_rows() {
    let dir = tempfile::tempdir().unwrap();
    let entries = write_suite(dir.path(), suite::SuiteKind::Convex, 6, 10.0);
    let mut reversed = entries.clone();
    reversed.reverse();
    let cfg = RunConfig::default();
    let a = harness::run_all(&entries, dir.path(), Mode::BBox, &SegmenterChoice::Builtin, &cfg);
    let b = harness::run_all(&reversed, dir.path(), Mode::BBox, &SegmenterChoice::Builtin, &cfg);
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0].id < w[1].id));
}

#[test]
fn reports_are_reproducible_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let entries = write_suite(dir.path(), suite::SuiteKind::Convex, 5, 0.0);
    let cfg = RunConfig::default();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let rows = harness::run_all(&entries, dir.path(), Mode::Point, &SegmenterChoice::Builtin, &cfg);
        let summary = RunSummary::new(&rows, "point", "builtin", 5);
        let csv = dir.path().join(format!("run{run}.csv"));
        let json = harness::emit_report(&rows, &summary, &csv).unwrap();
        assert_eq!(json, dir.path().join(format!("run{run}_summary.json")));
        outputs.push((std::fs::read(&csv).unwrap(), std::fs::read(&json).unwrap(), rows));
    }
    assert_eq!(outputs[0].0, outputs[1].0);
    assert_eq!(outputs[0].1, outputs[1].1);
    let rows = &outputs[0].2;
    assert_eq!(String::from_utf8_lossy(&outputs[0].0).lines().count(), rows.len() + 1);

    let summary: RunSummary = serde_json::from_slice(&outputs[0].1).unwrap();
    assert_eq!(summary.groups["lesion_type"], harness::summarize(rows, GroupBy::LesionType));
    for s in summary.groups.values().flatten() {
        assert!(s.q1 <= s.median && s.median <= s.q3, "{s:?}");
    }
}

#[test]
fn sphericity_groups_follow_phantom_truth() {
    let dir = tempfile::tempdir().unwrap();
    let entries = write_suite(dir.path(), suite::SuiteKind::Convex, 10, 0.0);
    let rows = harness::run_all(&entries, dir.path(), Mode::BBox, &SegmenterChoice::Builtin, &RunConfig::default());
    let mut expected = (0, 0);
    for e in &entries {
        let case = e.load(dir.path()).unwrap();
        let s = lesionbench_core::metrics::sphericity(&case.gt).unwrap();
        if s > 0.6 {
            expected.0 += 1;
        } else {
            expected.1 += 1;
        }
    }
    let groups = harness::summarize(&rows, GroupBy::Sphericity);
    let n = |key: &str| groups.iter().find(|s| s.group == key && s.column == "dice").map_or(0, |s| s.n);
    assert_eq!((n("sphericity>0.6"), n("sphericity<=0.6")), expected);
}

#[test]
fn failed_case_keeps_the_batch_going() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = write_suite(dir.path(), suite::SuiteKind::Convex, 3, 0.0);
    std::fs::remove_file(dir.path().join(&entries[1].image)).unwrap();
    entries[2].image = entries[0].image.clone();
    let rows = harness::run_all(&entries, dir.path(), Mode::Point, &SegmenterChoice::Builtin, &RunConfig::default());
    assert!(rows[0].is_ok());
    assert!(rows[1].error.as_deref().unwrap().contains(&entries[1].image));
    assert!(!rows[2].is_ok(), "grid mismatch between image and mask must fail");
}
