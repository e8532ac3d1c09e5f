//! Synthetic CT phantoms with analytically known lesions.
//!
//! Coordinates are millimeters with voxel `i` centered at `i * spacing`.
//! A voxel belongs to the lesion when its center lies inside the shape
//! (boundary inclusive).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::manifest::{CaseEntry, CaseManifest};
use crate::io;
use crate::rng::SplitMix64;
use crate::volume::{CtVolume, Dims, MaskVolume, Spacing};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LesionShape {
    /// Axis-aligned ellipsoid; centered in the volume unless `center_mm` is given.
    Ellipsoid {
        semi_axes_mm: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center_mm: Option<[f64; 3]>,
    },
    /// Union of spheres.
    Lobulated { lobes: Vec<Lobe> },
}

/// Inner compartment with its own attenuation, e.g. a necrotic center.
/// It changes CT values only; the mask and truth describe the whole lesion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Core {
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
    pub hu: f64,
}

impl Core {
    #[inline]
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).map(|a| ((p[a] - self.center_mm[a]) / self.semi_axes_mm[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: LesionShape,
    pub lesion_hu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core: Option<Core>,
    pub background_hu: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    pub dims: Dims,
    pub spacing: Spacing,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub volume_ml: f64,
    pub long_axis_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphericity: Option<f64>,
    pub shape: LesionShape,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub ct: CtVolume,
    pub mask: MaskVolume,
    pub truth: PhantomTruth,
}

/// A phantom destined for a manifest.
#[derive(Debug, Clone)]
pub struct PhantomCase {
    pub id: String,
    pub lesion_type: String,
    pub is_lymph_node: bool,
    pub phantom: Phantom,
}

enum Resolved {
    Ellipsoid { center: [f64; 3], axes: [f64; 3] },
    Lobulated(Vec<Lobe>),
}

impl Resolved {
    #[inline]
    fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Resolved::Ellipsoid { center, axes } => {
                let mut s = 0.0;
                for a in 0..3 {
                    let t = (p[a] - center[a]) / axes[a];
                    s += t * t;
                }
                s <= 1.0
            }
            Resolved::Lobulated(lobes) => lobes.iter().any(|l| {
                let d2: f64 = (0..3).map(|a| (p[a] - l.center_mm[a]).powi(2)).sum();
                d2 <= l.radius_mm * l.radius_mm
            }),
        }
    }

    /// Axis-aligned bounding box `(min, max)` in mm.
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Resolved::Ellipsoid { center, axes } => {
                (std::array::from_fn(|a| center[a] - axes[a]), std::array::from_fn(|a| center[a] + axes[a]))
            }
            Resolved::Lobulated(lobes) => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for l in lobes {
                    for a in 0..3 {
                        lo[a] = lo[a].min(l.center_mm[a] - l.radius_mm);
                        hi[a] = hi[a].max(l.center_mm[a] + l.radius_mm);
                    }
                }
                (lo, hi)
            }
        }
    }
}

impl PhantomSpec {
    fn resolve(&self) -> Result<Resolved> {
        if self.dims.contains(&0) {
            return Err(Error::contract(format!("phantom dims must be >= 1, got {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::contract(format!("phantom spacing must be > 0, got {:?}", self.spacing)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::contract(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        let resolved = match &self.shape {
            LesionShape::Ellipsoid { semi_axes_mm, center_mm } => {
                if semi_axes_mm.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return Err(Error::contract(format!("semi-axes must be > 0, got {semi_axes_mm:?}")));
                }
                let center = center_mm.unwrap_or_else(|| self.extent().map(|e| e / 2.0));
                Resolved::Ellipsoid { center, axes: *semi_axes_mm }
            }
            LesionShape::Lobulated { lobes } => {
                if lobes.is_empty() {
                    return Err(Error::contract("lobulated shape needs at least one lobe"));
                }
                if let Some(l) = lobes.iter().find(|l| !(l.radius_mm > 0.0 && l.radius_mm.is_finite())) {
                    return Err(Error::contract(format!("lobe radius must be > 0, got {}", l.radius_mm)));
                }
                Resolved::Lobulated(lobes.clone())
            }
        };
        if let Some(core) = &self.core {
            if core.semi_axes_mm.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                return Err(Error::contract(format!("core semi-axes must be > 0, got {:?}", core.semi_axes_mm)));
            }
        }
        let (lo, hi) = resolved.bounds();
        let extent = self.extent();
        for a in 0..3 {
            if lo[a] < 0.0 || hi[a] > extent[a] {
                return Err(Error::contract(format!(
                    "lesion spans [{:.3}, {:.3}] mm on axis {a}, outside volume extent [0, {:.3}]",
                    lo[a], hi[a], extent[a]
                )));
            }
        }
        Ok(resolved)
    }

    /// Physical span of voxel centers per axis.
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.dims[a] - 1) as f64 * self.spacing[a])
    }
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    let shape = spec.resolve()?;
    let sp = spec.spacing;
    let mask = MaskVolume::from_fn(spec.dims, sp, |x, y, z| {
        shape.contains([x as f64 * sp[0], y as f64 * sp[1], z as f64 * sp[2]])
    });
    let base = SplitMix64::new(spec.rng_seed);
    let data = mask
        .data()
        .iter()
        .enumerate()
        .map(|(i, &inside)| {
            let mean = match (inside, &spec.core) {
                (false, _) => spec.background_hu,
                (true, Some(core)) if core.contains(mask_point(spec, i)) => core.hu,
                (true, _) => spec.lesion_hu,
            };
            let noise =
                if spec.noise_sigma > 0.0 { spec.noise_sigma * base.split(i as u64).next_gaussian() } else { 0.0 };
            (mean + noise) as f32
        })
        .collect();
    let ct = CtVolume::new(spec.dims, sp, data)?;
    let truth = truth_for(spec, &shape);
    Ok(Phantom { ct, mask, truth })
}

fn mask_point(spec: &PhantomSpec, i: usize) -> [f64; 3] {
    let [nx, ny, _] = spec.dims;
    let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
    [x as f64 * spec.spacing[0], y as f64 * spec.spacing[1], z as f64 * spec.spacing[2]]
}

fn truth_for(spec: &PhantomSpec, shape: &Resolved) -> PhantomTruth {
    let (volume_ml, long_axis_mm, sphericity) = match shape {
        Resolved::Ellipsoid { axes, .. } => {
            let [a, b, c] = *axes;
            let v = 4.0 / 3.0 * std::f64::consts::PI * a * b * c;
            (v / 1000.0, 2.0 * a.max(b), spheroid_sphericity(*axes))
        }
        Resolved::Lobulated(lobes) => {
            (union_volume_mm3(lobes, spec.spacing) / 1000.0, union_axial_diameter(lobes), None)
        }
    };
    PhantomTruth { volume_ml, long_axis_mm, sphericity, shape: spec.shape.clone() }
}

/// Closed-form sphericity for spheres and spheroids; `None` for triaxial ellipsoids.
pub fn spheroid_sphericity(axes: [f64; 3]) -> Option<f64> {
    use std::f64::consts::PI;
    let [a, b, c] = axes;
    let (eq, polar) = if a == b {
        (a, c)
    } else if a == c {
        (a, b)
    } else if b == c {
        (b, a)
    } else {
        return None;
    };
    let area = if eq == polar {
        return Some(1.0);
    } else if polar < eq {
        let e = (1.0 - polar * polar / (eq * eq)).sqrt();
        2.0 * PI * eq * eq * (1.0 + (1.0 - e * e) / e * e.atanh())
    } else {
        let e = (1.0 - eq * eq / (polar * polar)).sqrt();
        2.0 * PI * eq * eq * (1.0 + polar / (eq * e) * e.asin())
    };
    let v = 4.0 / 3.0 * PI * eq * eq * polar;
    Some(crate::metrics::sphericity_from(v, area))
}

/// Volume of a union of spheres by counting points of a lattice 4x finer
/// than the voxel grid.
pub fn union_volume_mm3(lobes: &[Lobe], spacing: Spacing) -> f64 {
    let h: [f64; 3] = spacing.map(|s| s / 4.0);
    let shape = Resolved::Lobulated(lobes.to_vec());
    let (lo, hi) = shape.bounds();
    let start: [i64; 3] = std::array::from_fn(|a| (lo[a] / h[a]).floor() as i64);
    let end: [i64; 3] = std::array::from_fn(|a| (hi[a] / h[a]).ceil() as i64);
    let mut count = 0u64;
    for k in start[2]..=end[2] {
        for j in start[1]..=end[1] {
            for i in start[0]..=end[0] {
                if shape.contains([i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]]) {
                    count += 1;
                }
            }
        }
    }
    count as f64 * h[0] * h[1] * h[2]
}

/// Longest in-plane chord of a union of spheres over all axial planes.
///
/// At height `z` the section is a union of discs, whose diameter is the
/// max over disc pairs of `|ci - cj| + ri(z) + rj(z)`; that sum is concave
/// in `z` on the pair's common support, so a ternary search finds it.
pub fn union_axial_diameter(lobes: &[Lobe]) -> f64 {
    let disc = |l: &Lobe, z: f64| (l.radius_mm * l.radius_mm - (z - l.center_mm[2]).powi(2)).max(0.0).sqrt();
    let mut best = 0.0f64;
    for (i, a) in lobes.iter().enumerate() {
        best = best.max(2.0 * a.radius_mm);
        for b in &lobes[i + 1..] {
            let lo = (a.center_mm[2] - a.radius_mm).max(b.center_mm[2] - b.radius_mm);
            let hi = (a.center_mm[2] + a.radius_mm).min(b.center_mm[2] + b.radius_mm);
            if lo > hi {
                continue;
            }
            let d = ((a.center_mm[0] - b.center_mm[0]).powi(2) + (a.center_mm[1] - b.center_mm[1]).powi(2)).sqrt();
            let f = |z: f64| d + disc(a, z) + disc(b, z);
            let (mut l, mut r) = (lo, hi);
            for _ in 0..200 {
                let m1 = l + (r - l) / 3.0;
                let m2 = r - (r - l) / 3.0;
                if f(m1) < f(m2) {
                    l = m1;
                } else {
                    r = m2;
                }
            }
            best = best.max(f(0.5 * (l + r)));
        }
    }
    best
}

/// Writes `<id>_ct.nii`, `<id>_mask.nii`, `<id>_truth.json` per case plus
/// `manifest.json`; returns the manifest path.
pub fn emit_manifest(cases: &[PhantomCase], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    if cases.is_empty() {
        return Err(Error::contract("empty manifest"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(cases.len());
    for case in cases {
        let image = format!("{}_ct.nii", case.id);
        let gt_mask = format!("{}_mask.nii", case.id);
        let truth = format!("{}_truth.json", case.id);
        io::save_volume(&case.phantom.ct, dir.join(&image))?;
        io::save_mask(&case.phantom.mask, dir.join(&gt_mask))?;
        let mut text = serde_json::to_string_pretty(&case.phantom.truth).expect("truth serializes");
        text.push('\n');
        let truth_path = dir.join(&truth);
        std::fs::write(&truth_path, text).map_err(|e| Error::io(&truth_path, e))?;
        entries.push(CaseEntry {
            id: case.id.clone(),
            image,
            gt_mask,
            lesion_type: case.lesion_type.clone(),
            is_lymph_node: case.is_lymph_node,
            truth: Some(truth),
        });
    }
    let manifest = CaseManifest { cases: entries };
    manifest.validate()?;
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Named phantom collections used by the evaluation and acceptance runs.
pub mod suite {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
    #[serde(rename_all = "snake_case")]
    pub enum SuiteKind {
        /// Spheres, ellipsoids, lymph-node-like ovoids and compact lobulated lesions.
        Convex,
        /// Mostly necrotic lesions (hypodense core inside an enhancing rim),
        /// plus ellipsoids, lobulated lesions and spheres.
        Irregular,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SuiteSpec {
        pub kind: SuiteKind,
        pub count: usize,
        #[serde(default)]
        pub seed: u64,
        #[serde(default)]
        pub noise_sigma: f64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SuiteCase {
        pub id: String,
        pub lesion_type: String,
        pub is_lymph_node: bool,
        pub spec: PhantomSpec,
    }

    impl SuiteCase {
        pub fn generate(&self) -> Result<PhantomCase> {
            Ok(PhantomCase {
                id: self.id.clone(),
                lesion_type: self.lesion_type.clone(),
                is_lymph_node: self.is_lymph_node,
                phantom: super::generate(&self.spec)?,
            })
        }
    }

    struct Draw(SplitMix64);

    impl Draw {
        fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
            lo + (hi - lo) * self.0.next_f64()
        }

        fn pick<T: Copy>(&mut self, xs: &[T]) -> T {
            xs[self.0.next_range(0, xs.len() as i64 - 1) as usize]
        }
    }

    /// Builds a volume around lobes given in a lesion-centered frame,
    /// with at least `margin` mm of background on every side. In-plane
    /// margins are at least half the lesion extent, which keeps every axial
    /// section under a quarter of the slice.
    fn place(lobes: Vec<Lobe>, spacing: Spacing, margin: f64, half_voxel_xy: bool) -> (Vec<Lobe>, Dims) {
        let (lo, hi) = Resolved::Lobulated(lobes.clone()).bounds();
        let mut dims = [0usize; 3];
        let mut shift = [0f64; 3];
        for a in 0..3 {
            let m = if a < 2 { margin.max(0.5 * (hi[a] - lo[a])) } else { margin };
            let span = hi[a] - lo[a] + 2.0 * m;
            let mut n = (span / spacing[a]).ceil() as usize + 1;
            if a < 2 && half_voxel_xy && n % 2 == 1 {
                n += 1;
            }
            dims[a] = n;
            let center = (n - 1) as f64 * spacing[a] / 2.0;
            shift[a] = center - 0.5 * (lo[a] + hi[a]);
        }
        let lobes = lobes
            .into_iter()
            .map(|l| Lobe { center_mm: std::array::from_fn(|a| l.center_mm[a] + shift[a]), radius_mm: l.radius_mm })
            .collect();
        (lobes, dims)
    }

    fn ellipsoid_case(axes: [f64; 3], spacing: Spacing) -> (LesionShape, Dims) {
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let margin = if a < 2 { axes[a].max(6.0) } else { 6.0 };
            let mut n = ((2.0 * (axes[a] + margin)) / spacing[a]).ceil() as usize + 1;
            if a < 2 && n % 2 == 1 {
                n += 1;
            }
            dims[a] = n;
        }
        (LesionShape::Ellipsoid { semi_axes_mm: axes, center_mm: None }, dims)
    }

    fn compact_lobulated(d: &mut Draw) -> Vec<Lobe> {
        let main = d.uniform(6.5, 9.5);
        let mut lobes = vec![Lobe { center_mm: [0.0; 3], radius_mm: main }];
        let n = d.pick(&[2usize, 3]);
        for k in 0..n {
            let theta = std::f64::consts::TAU * (k as f64 / n as f64) + d.uniform(-0.4, 0.4);
            let off = main * d.uniform(0.45, 0.65);
            let dz = d.uniform(-0.3, 0.3) * main;
            lobes.push(Lobe { center_mm: [off * theta.cos(), off * theta.sin(), dz], radius_mm: d.uniform(4.0, 6.0) });
        }
        lobes
    }

    pub fn build(spec: &SuiteSpec) -> Vec<SuiteCase> {
        let root = SplitMix64::new(spec.seed);
        (0..spec.count)
            .map(|i| {
                let mut d = Draw(root.split(i as u64));
                let slot = i % 10;
                let background_hu = d.pick(&[-800.0, -100.0]);
                let mut lesion_hu = d.uniform(30.0, 90.0).round();
                let mut core = None;
                let iso: Spacing = [1.0, 1.0, 1.0];
                let (lesion_type, is_node, shape, dims, spacing) = match (spec.kind, slot) {
                    (SuiteKind::Convex, 0..=3) | (SuiteKind::Irregular, 9) => {
                        let r = d.uniform(5.0, 12.0);
                        let spacing = [1.0, 1.0, d.pick(&[1.0, 1.0, 1.5])];
                        let lobes = vec![Lobe { center_mm: [0.0; 3], radius_mm: r }];
                        let (mut lobes, dims) = place(lobes, spacing, 6.0, true);
                        lobes[0].center_mm[2] += d.uniform(-0.5, 0.5) * spacing[2];
                        let center = lobes[0].center_mm;
                        let shape = LesionShape::Ellipsoid { semi_axes_mm: [r; 3], center_mm: Some(center) };
                        ("sphere", false, shape, dims, spacing)
                    }
                    (SuiteKind::Convex, 4..=5) | (SuiteKind::Irregular, 6..=7) => {
                        let axes = [d.uniform(5.0, 12.0), d.uniform(4.0, 10.0), d.uniform(4.0, 10.0)];
                        let spacing = [1.0, 1.0, d.pick(&[1.0, 2.0])];
                        let (shape, dims) = ellipsoid_case(axes, spacing);
                        ("ellipsoid", false, shape, dims, spacing)
                    }
                    (SuiteKind::Convex, 6) => {
                        let long = d.uniform(9.0, 14.0);
                        let short = d.uniform(6.0, 9.0);
                        let axes = [long, short, short];
                        let spacing = [0.8, 0.8, 1.0];
                        lesion_hu = d.uniform(30.0, 50.0).round();
                        let (shape, dims) = ellipsoid_case(axes, spacing);
                        ("lymph_node", true, shape, dims, spacing)
                    }
                    (SuiteKind::Convex, _) | (SuiteKind::Irregular, 8) => {
                        let (lobes, dims) = place(compact_lobulated(&mut d), iso, 6.0, false);
                        ("lobulated", false, LesionShape::Lobulated { lobes }, dims, iso)
                    }
                    (SuiteKind::Irregular, _) => {
                        let r = d.uniform(7.0, 12.0);
                        let axes = [r, r * d.uniform(0.8, 1.0), r * d.uniform(0.8, 1.0)];
                        let (shape, dims) = ellipsoid_case(axes, iso);
                        let center: [f64; 3] = std::array::from_fn(|a| (dims[a] - 1) as f64 / 2.0);
                        let frac = d.uniform(0.5, 0.7);
                        let shift = [d.uniform(-0.15, 0.15) * r, d.uniform(-0.15, 0.15) * r, 0.0];
                        lesion_hu = d.uniform(90.0, 130.0).round();
                        core = Some(Core {
                            center_mm: std::array::from_fn(|a| center[a] + shift[a]),
                            semi_axes_mm: axes.map(|v| v * frac),
                            hu: d.uniform(0.0, 25.0).round(),
                        });
                        ("necrotic", false, shape, dims, iso)
                    }
                };
                SuiteCase {
                    id: format!("case{i:03}"),
                    lesion_type: lesion_type.to_string(),
                    is_lymph_node: is_node,
                    spec: PhantomSpec {
                        shape,
                        lesion_hu,
                        core,
                        background_hu,
                        noise_sigma: spec.noise_sigma,
                        dims,
                        spacing,
                        rng_seed: root.split(1_000_000 + i as u64).next_u64(),
                    },
                }
            })
            .collect()
    }
}
