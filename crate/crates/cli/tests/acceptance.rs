//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use lesionbench_core::harness::readers::by_lesion;
use lesionbench_core::harness::{
    inter_operator_variability, run_all, simulate_readers, CaseEntry, CaseManifest, CaseResult, JitterConfig, Mode,
    ReaderMode, RunConfig,
};
use lesionbench_core::metrics::{self, LesionRecord, MorphologyReport};
use lesionbench_core::phantom::suite::{self, SuiteKind, SuiteSpec};
use lesionbench_core::phantom::{self, LesionShape, PhantomSpec};
use lesionbench_core::pipeline::{run_pipeline, InitialPrompt, PipelineConfig};
use lesionbench_core::prompt_sim::gt_point_prompt;
use lesionbench_core::rng::SplitMix64;
use lesionbench_core::segment::{rle, BBox, ExternalSegmenter, Prompt2D, Segmenter, SegmenterChoice};
use lesionbench_core::stats::welch_t_test;
use lesionbench_core::{HuSlice, Mask2D, MaskVolume, WindowSpec};
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let pos = 0.5 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

struct Suite {
    _dir: tempfile::TempDir,
    base: PathBuf,
    entries: Vec<CaseEntry>,
}

fn write_suite(kind: SuiteKind, count: usize, seed: u64, noise_sigma: f64) -> Suite {
    let dir = tempfile::tempdir().expect("temp dir");
    let spec = SuiteSpec { kind, count, seed, noise_sigma };
    let cases: Vec<_> = suite::build(&spec).iter().map(|c| c.generate().expect("phantom")).collect();
    let manifest = phantom::emit_manifest(&cases, dir.path()).expect("manifest");
    let entries = CaseManifest::load(&manifest).expect("manifest loads").sorted();
    Suite { base: dir.path().to_path_buf(), _dir: dir, entries }
}

fn run(suite: &Suite, mode: Mode) -> Vec<CaseResult> {
    run_all(&suite.entries, &suite.base, mode, &SegmenterChoice::Builtin, &RunConfig::default())
}

// Brute-force oracles, written without the library's helpers.

fn oracle_dice(a: &MaskVolume, b: &MaskVolume) -> f64 {
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    2.0 * inter as f64 / (na + nb) as f64
}

fn oracle_volume_ml(m: &MaskVolume) -> f64 {
    let [sx, sy, sz] = m.spacing();
    m.data().iter().filter(|&&v| v).count() as f64 * sx * sy * sz / 1000.0
}

/// Longest boundary chord, lower z then smaller endpoint pair on ties.
fn oracle_long_axis(m: &MaskVolume) -> (f64, [[usize; 3]; 2]) {
    let [nx, ny, nz] = m.dims();
    let [sx, sy, _] = m.spacing();
    let mut best: Option<(f64, usize, ((i64, i64), (i64, i64)))> = None;
    for z in 0..nz {
        let mut pts = Vec::new();
        for y in 0..ny {
            for x in 0..nx {
                if !m.get(x, y, z) {
                    continue;
                }
                let edge = x == 0 || y == 0 || x + 1 == nx || y + 1 == ny;
                if edge || !m.get(x - 1, y, z) || !m.get(x + 1, y, z) || !m.get(x, y - 1, z) || !m.get(x, y + 1, z) {
                    pts.push((x as i64, y as i64));
                }
            }
        }
        for &p in &pts {
            for &q in &pts {
                let dx = (p.0 - q.0) as f64 * sx;
                let dy = (p.1 - q.1) as f64 * sy;
                let d2 = dx * dx + dy * dy;
                let pair = if p <= q { (p, q) } else { (q, p) };
                let better = match best {
                    None => true,
                    Some((bd, bz, bp)) => d2 > bd || (d2 == bd && (z, pair) < (bz, bp)),
                };
                if better {
                    best = Some((d2, z, pair));
                }
            }
        }
    }
    let (d2, z, (a, b)) = best.expect("non-empty");
    (d2.sqrt(), [[a.0 as usize, a.1 as usize, z], [b.0 as usize, b.1 as usize, z]])
}

fn random_mask(rng: &mut SplitMix64, spacing: [f64; 3]) -> MaskVolume {
    loop {
        let density = 0.05 + 0.6 * rng.next_f64();
        let m = if rng.next_u64().is_multiple_of(2) {
            MaskVolume::from_fn([16; 3], spacing, |_, _, _| rng.next_f64() < density)
        } else {
            // Solid ellipsoid-ish blob with speckle, closer to real masks.
            let c = [rng.next_range(3, 12) as f64, rng.next_range(3, 12) as f64, rng.next_range(3, 12) as f64];
            let r = [rng.next_range(2, 7) as f64, rng.next_range(2, 7) as f64, rng.next_range(2, 7) as f64];
            MaskVolume::from_fn([16; 3], spacing, |x, y, z| {
                let q = [x as f64, y as f64, z as f64];
                let d: f64 = (0..3).map(|a| ((q[a] - c[a]) / r[a]).powi(2)).sum();
                (d <= 1.0) != (rng.next_f64() < 0.05 * density)
            })
        };
        if !m.is_empty() {
            return m;
        }
    }
}

fn metric_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(20_261_014);
    let mut mismatches = Vec::new();
    for i in 0..200 {
        let spacing = if i % 2 == 0 {
            [1.0; 3]
        } else {
            [0.5 + 1.5 * rng.next_f64(), 0.5 + 1.5 * rng.next_f64(), 0.5 + 3.0 * rng.next_f64()]
        };
        let a = random_mask(&mut rng, spacing);
        let b = random_mask(&mut rng, spacing);
        let dice = metrics::dice(&a, &b).map_err(|e| e.to_string())?;
        if dice != oracle_dice(&a, &b) {
            mismatches.push(format!("#{i} dice {dice} vs {}", oracle_dice(&a, &b)));
        }
        let vol = metrics::volume_ml(&a);
        if (vol - oracle_volume_ml(&a)).abs() > 1e-12 * vol.max(1.0) {
            mismatches.push(format!("#{i} volume {vol} vs {}", oracle_volume_ml(&a)));
        }
        let la = metrics::long_axis(&a).map_err(|e| e.to_string())?;
        let (len, ends) = oracle_long_axis(&a);
        if la.length_mm != len || la.endpoints != ends {
            mismatches.push(format!("#{i} long axis {:?} vs {len} {ends:?}", la));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        mismatches.is_empty() && secs < 60.0,
        format!(
            "200 mask pairs, {} mismatches{}, {secs:.1} s (limit 60 s)",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

fn sphere_phantom() -> Outcome {
    let spec = PhantomSpec {
        shape: LesionShape::Ellipsoid { semi_axes_mm: [12.5; 3], center_mm: None },
        lesion_hu: 60.0,
        core: None,
        background_hu: -800.0,
        noise_sigma: 0.0,
        dims: [64, 64, 48],
        spacing: [1.0; 3],
        rng_seed: 0,
    };
    let p = phantom::generate(&spec).map_err(|e| e.to_string())?;
    let [x, y, z] = gt_point_prompt(&p.mask).map_err(|e| e.to_string())?;
    let mut seg = SegmenterChoice::Builtin.instantiate(Default::default()).map_err(|e| e.to_string())?;
    let out = run_pipeline(&p.ct, &InitialPrompt::Point { x, y, z }, &[], seg.as_mut(), &PipelineConfig::default())
        .map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for (what, mask) in [("truth mask", &p.mask), ("point pipeline", &out.mask)] {
        let r = metrics::morphology(mask).map_err(|e| e.to_string())?;
        let vol_err = (r.volume_ml - 8.181).abs() / 8.181;
        ok &= vol_err <= 0.02 && (0.97..=1.03).contains(&r.sphericity) && (r.long_axis_mm - 25.0).abs() <= 2.0;
        lines.push(format!(
            "{what}: volume {:.4} mL ({:.2}% off), sphericity {:.4}, long axis {:.3} mm",
            r.volume_ml,
            100.0 * vol_err,
            r.sphericity,
            r.long_axis_mm
        ));
    }
    check(ok, format!("{} (limits 2%, [0.97, 1.03], 25 +/- 2 mm)", lines.join("; ")))
}

fn cube_sphericity() -> Outcome {
    let expected = (std::f64::consts::PI / 6.0).powf(1.0 / 3.0);
    let worst = [0.5, 1.0, 3.0, 10.0, 42.0]
        .iter()
        .map(|&a: &f64| (metrics::sphericity_from(a.powi(3), 6.0 * a * a) - expected).abs())
        .fold(0.0, f64::max);
    check(worst <= 1e-12, format!("max |S - (pi/6)^(1/3)| = {worst:.2e} (limit 1e-12)"))
}

fn end_to_end(convex: &Suite) -> Outcome {
    let t0 = Instant::now();
    let rows = run(convex, Mode::Point);
    let secs = t0.elapsed().as_secs_f64();
    let good = rows.iter().filter(|r| r.dice.is_some_and(|d| d > 0.9)).count();
    let spheres: Vec<_> = rows.iter().filter(|r| r.lesion_type == "sphere").collect();
    let bounded = spheres.iter().filter(|r| r.stop_reasons == "up=object_boundary;down=object_boundary").count();
    check(
        rows.len() == 50 && good >= 45 && !spheres.is_empty() && bounded == spheres.len() && secs < 300.0,
        format!(
            "DICE > 0.9 on {good}/{} (need 45), object_boundary on {bounded}/{} spheres, {secs:.1} s (limit 300 s)",
            rows.len(),
            spheres.len()
        ),
    )
}

struct Paired {
    point: Vec<CaseResult>,
    edit: Vec<CaseResult>,
}

fn edit_monotonicity(p: &Paired) -> Outcome {
    let mut worse = Vec::new();
    let mut gains = Vec::new();
    for (a, b) in p.point.iter().zip(&p.edit) {
        match (a.dice, b.dice) {
            (Some(da), Some(db)) => {
                if db < da {
                    worse.push(a.id.clone());
                }
                gains.push(db - da);
            }
            _ => worse.push(format!("{} (failed)", a.id)),
        }
    }
    let mean = gains.iter().sum::<f64>() / gains.len().max(1) as f64;
    check(
        p.point.len() == 50 && worse.is_empty() && mean > 0.0,
        format!(
            "point-edit >= point on {}/{} cases, mean DICE gain {mean:.4} (need > 0){}",
            p.point.len() - worse.len(),
            p.point.len(),
            if worse.is_empty() { String::new() } else { format!(", worse: {worse:?}") }
        ),
    )
}

fn relative_error(p: &Paired) -> Outcome {
    let rel = |rows: &[CaseResult]| rows.iter().filter_map(|r| r.rel_err).collect::<Vec<_>>();
    let (a, b) = (rel(&p.point), rel(&p.edit));
    if a.len() != p.point.len() || b.len() != p.edit.len() {
        return Err(format!("missing rel_err: {} point, {} point-edit rows", a.len(), b.len()));
    }
    let (ma, mb) = (median(a), median(b));
    check(mb < ma, format!("median relative error {:.4} -> {:.4} (need strict decrease)", ma, mb))
}

fn reader_variability(convex: &Suite) -> Outcome {
    let jitter = JitterConfig::default();
    let mut overall = BTreeMap::new();
    for mode in [ReaderMode::Manual, ReaderMode::Assisted] {
        let rows = simulate_readers(
            &convex.entries,
            &convex.base,
            3,
            &jitter,
            mode,
            &SegmenterChoice::Builtin,
            &RunConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        overall.insert(mode, (inter_operator_variability(&by_lesion(&rows)).overall, rows.len()));
    }
    let (manual, nm) = overall[&ReaderMode::Manual];
    let (assisted, na) = overall[&ReaderMode::Assisted];
    check(
        nm == 150 && na == 150 && assisted <= manual,
        format!("3 readers x 50 cases: assisted {assisted:.3} mm <= manual {manual:.3} mm ({na}/{nm} measurements)"),
    )
}

fn welch_oracle() -> Outcome {
    let mut rng = SplitMix64::new(77);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let na = rng.next_range(2, 30) as usize;
        let nb = rng.next_range(2, 30) as usize;
        let (mu, sd) = (10.0 * rng.next_gaussian(), 0.5 + 5.0 * rng.next_f64());
        let a: Vec<f64> = (0..na).map(|_| 3.0 * rng.next_gaussian()).collect();
        let b: Vec<f64> = (0..nb).map(|_| mu * 0.1 + sd * rng.next_gaussian()).collect();
        let stats = |x: &[f64]| {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0), n)
        };
        let ((ma, va, fa), (mb, vb, fb)) = (stats(&a), stats(&b));
        let se2 = va / fa + vb / fb;
        let t = (ma - mb) / se2.sqrt();
        let df = se2 * se2 / ((va / fa).powi(2) / (fa - 1.0) + (vb / fb).powi(2) / (fb - 1.0));
        let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).map_err(|e| e.to_string())?.cdf(t.abs()));
        let got = welch_t_test(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((got.p - p).abs());
        if (got.t - t).abs() > 1e-9 * t.abs().max(1.0) || (got.df - df).abs() > 1e-9 * df {
            return Err(format!("t/df mismatch: ({}, {}) vs ({t}, {df})", got.t, got.df));
        }
    }
    check(worst < 1e-6, format!("20 sample pairs, max |dp| = {worst:.2e} (limit 1e-6)"))
}

fn eligibility() -> Outcome {
    let rec = |node: bool, long: f64, short: f64| LesionRecord {
        id: String::new(),
        is_lymph_node: node,
        report: MorphologyReport {
            volume_ml: 1.0,
            surface_area_mm2: 1.0,
            sphericity: 1.0,
            long_axis_mm: long,
            short_axis_mm: short,
            long_axis_endpoints: [[0; 3]; 2],
            long_axis_slice: 0,
        },
    };
    let table = [
        (false, 9.999, 9.0, false),
        (false, 10.0, 2.0, true),
        (false, 10.001, 10.0, true),
        (false, 40.0, 1.0, true),
        (false, 9.0, 20.0, false),
        (true, 14.999, 14.999, false),
        (true, 15.0, 15.0, true),
        (true, 30.0, 14.999, false),
        (true, 16.0, 15.001, true),
        (true, 9.0, 15.0, true),
    ];
    let failures: Vec<_> = table
        .iter()
        .filter(|&&(node, long, short, want)| metrics::recist_eligible(&rec(node, long, short)) != want)
        .collect();
    check(
        failures.is_empty(),
        format!("{}/{} boundary cases, failures {failures:?}", table.len() - failures.len(), table.len()),
    )
}

fn cli_determinism(noisy_dir: &Path) -> Outcome {
    let exe = env!("CARGO_BIN_EXE_lesionbench");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = noisy_dir.join("manifest.json");
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let csv = out.path().join(format!("{run}.csv"));
        let status = Command::new(exe)
            .args(["eval", "--mode", "point-edit", "--segmenter", "builtin", "--seed", "7", "--manifest"])
            .arg(&manifest)
            .arg("--out")
            .arg(&csv)
            .env("RUST_LOG", "error")
            .stdout(Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("lesionbench eval exited with {status}"));
        }
        let summary = std::fs::read(out.path().join(format!("{run}_summary.json"))).map_err(|e| e.to_string())?;
        csvs.push((std::fs::read(&csv).map_err(|e| e.to_string())?, summary));
    }
    let rows = String::from_utf8_lossy(&csvs[0].0).lines().count().saturating_sub(1);
    check(
        csvs[0] == csvs[1] && rows > 0,
        format!(
            "two point-edit runs, {rows} rows, csv identical: {}, summary identical: {}",
            csvs[0].0 == csvs[1].0,
            csvs[0].1 == csvs[1].1
        ),
    )
}

fn protocol_round_trip() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_segproto-echo");
    let mut seg = ExternalSegmenter::spawn(&format!("'{exe}'")).map_err(|e| e.to_string())?;
    let mut rng = SplitMix64::new(4242);
    let mut kinds = [0usize; 3];
    for i in 0..100 {
        let (w, h) = (rng.next_range(4, 64) as usize, rng.next_range(4, 64) as usize);
        let hu: Vec<f32> = (0..w * h).map(|_| rng.next_range(-1024, 2000) as f32).collect();
        let slice = HuSlice::new(w, h, hu, WindowSpec::default()).map_err(|e| e.to_string())?;
        let pt =
            |rng: &mut SplitMix64| (rng.next_range(0, w as i64 - 1) as usize, rng.next_range(0, h as i64 - 1) as usize);
        let kind = i % 3;
        kinds[kind] += 1;
        let (prompt, expected) = match kind {
            0 => {
                let pos: Vec<_> = (0..rng.next_range(1, 5)).map(|_| pt(&mut rng)).collect();
                let neg: Vec<_> = (0..rng.next_range(0, 3)).map(|_| pt(&mut rng)).collect();
                let expected = Mask2D::from_fn(w, h, |x, y| pos.contains(&(x, y)));
                (Prompt2D { positive: pos, negative: neg, ..Default::default() }, expected)
            }
            1 => {
                let x0 = rng.next_range(0, w as i64 - 2) as usize;
                let y0 = rng.next_range(0, h as i64 - 2) as usize;
                let x1 = rng.next_range(x0 as i64 + 1, w as i64 - 1) as usize;
                let y1 = rng.next_range(y0 as i64 + 1, h as i64 - 1) as usize;
                let expected = Mask2D::from_fn(w, h, |x, y| (x0..=x1).contains(&x) && (y0..=y1).contains(&y));
                (Prompt2D::bbox(BBox::new(x0, y0, x1, y1)), expected)
            }
            _ => {
                let density = rng.next_f64();
                let prior = Mask2D::from_fn(w, h, |_, _| rng.next_f64() < density);
                (Prompt2D::prior(prior.clone(), None), prior)
            }
        };
        let got = seg.segment(&slice, &prompt).map_err(|e| format!("request {i}: {e}"))?;
        if rle::encode(&got.mask) != rle::encode(&expected) || got.mask != expected {
            return Err(format!("request {i} ({w}x{h}, kind {kind}): mask differs"));
        }
    }
    check(true, format!("100 prompts ({} point, {} bbox, {} prior), all masks bit-exact", kinds[0], kinds[1], kinds[2]))
}

fn main() {
    let t0 = Instant::now();
    let mut results: Vec<(&str, Outcome, Duration)> = Vec::new();
    let mut record = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let line = match &outcome {
            Ok(d) => format!("PASS {name}: {d}"),
            Err(d) => format!("FAIL {name}: {d}"),
        };
        println!("{line}");
        results.push((name, outcome, t.elapsed()));
    };

    record("metric-oracles", &mut metric_oracles);
    record("sphere-phantom", &mut sphere_phantom);
    record("cube-sphericity", &mut cube_sphericity);

    let convex = write_suite(SuiteKind::Convex, 50, 0, 0.0);
    record("end-to-end-point", &mut || end_to_end(&convex));

    let noisy = write_suite(SuiteKind::Irregular, 50, 0, 20.0);
    let paired = Paired { point: run(&noisy, Mode::Point), edit: run(&noisy, Mode::PointEdit) };
    record("edit-monotonicity", &mut || edit_monotonicity(&paired));
    record("relative-error-direction", &mut || relative_error(&paired));
    record("reader-variability", &mut || reader_variability(&convex));
    record("welch-oracle", &mut welch_oracle);
    record("eligibility-table", &mut eligibility);

    let small = write_suite(SuiteKind::Irregular, 10, 3, 20.0);
    record("cli-determinism", &mut || cli_determinism(&small.base));
    record("protocol-round-trip", &mut protocol_round_trip);

    let failed = results.iter().filter(|r| r.1.is_err()).count();
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
