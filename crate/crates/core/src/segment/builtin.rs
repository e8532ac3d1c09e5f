use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{BBox, Prompt2D, Segmentation, Segmenter, SegmenterConfig};
use crate::error::{Error, Result};
use crate::volume::{HuSlice, Mask2D};

/// Mean and (population) standard deviation of a set of HU samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub mean: f64,
    pub std: f64,
}

impl BandStats {
    pub fn from_values(values: impl IntoIterator<Item = f32>) -> Option<Self> {
        let mut n = 0usize;
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for v in values {
            let v = v as f64;
            n += 1;
            sum += v;
            sq += v * v;
        }
        if n == 0 {
            return None;
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        Some(Self { mean, std: var.sqrt() })
    }

    /// Stats of the pixels set in `mask`.
    pub fn under(slice: &HuSlice, mask: &Mask2D) -> Option<Self> {
        Self::from_values(mask.points().map(|(x, y)| slice.get(x, y)))
    }

    fn band(&self, cfg: &SegmenterConfig) -> Band {
        let half = cfg.band_k * self.std.max(cfg.sigma_floor);
        Band { lo: self.mean - half, hi: self.mean + half }
    }
}

#[derive(Debug, Clone, Copy)]
struct Band {
    lo: f64,
    hi: f64,
}

impl Band {
    #[inline]
    fn contains(&self, v: f32) -> bool {
        let v = v as f64;
        v >= self.lo && v <= self.hi
    }
}

fn neighborhood_stats(slice: &HuSlice, x: usize, y: usize, cfg: &SegmenterConfig) -> BandStats {
    let r = cfg.neighborhood / 2;
    let xs = x.saturating_sub(r)..=(x + r).min(slice.width - 1);
    let ys = y.saturating_sub(r)..=(y + r).min(slice.height - 1);
    let values = ys.flat_map(|yy| xs.clone().map(move |xx| (xx, yy))).map(|(xx, yy)| slice.get(xx, yy));
    BandStats::from_values(values).expect("neighborhood contains the seed")
}

#[inline]
fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut out = [(usize::MAX, usize::MAX); 4];
    if x > 0 {
        out[0] = (x - 1, y);
    }
    if x + 1 < w {
        out[1] = (x + 1, y);
    }
    if y > 0 {
        out[2] = (x, y - 1);
    }
    if y + 1 < h {
        out[3] = (x, y + 1);
    }
    out.into_iter().filter(|p| p.0 != usize::MAX)
}

/// Breadth-first 4-connected growth from `seeds` (always included) into
/// pixels accepted by `admit`. Stops with `runaway = true` once the region
/// would exceed `cap` pixels.
fn grow(
    width: usize,
    height: usize,
    seeds: &[(usize, usize)],
    cap: usize,
    mut admit: impl FnMut(usize, usize) -> bool,
) -> (Mask2D, bool) {
    let mut mask = Mask2D::empty(width, height);
    let mut queue = VecDeque::new();
    let mut count = 0usize;
    for &(x, y) in seeds {
        if !mask.get(x, y) {
            if count == cap {
                return (mask, true);
            }
            mask.set(x, y, true);
            count += 1;
            queue.push_back((x, y));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for (nx, ny) in neighbors4(x, y, width, height) {
            if !mask.get(nx, ny) && admit(nx, ny) {
                if count == cap {
                    return (mask, true);
                }
                mask.set(nx, ny, true);
                count += 1;
                queue.push_back((nx, ny));
            }
        }
    }
    (mask, false)
}

/// Removes, for each negative point inside the mask, the 4-connected part of
/// the mask reachable from it within the point's own intensity band.
fn carve(slice: &HuSlice, mask: &mut Mask2D, negatives: &[(usize, usize)], cfg: &SegmenterConfig) {
    for &(x, y) in negatives {
        if !mask.get(x, y) {
            continue;
        }
        let band = neighborhood_stats(slice, x, y, cfg).band(cfg);
        let current = mask.clone();
        let (region, _) = grow(slice.width, slice.height, &[(x, y)], usize::MAX, |px, py| {
            current.get(px, py) && band.contains(slice.get(px, py))
        });
        mask.subtract(&region);
    }
}

/// Seeded region growing from the positive points, band taken from the
/// neighborhood of the first seed.
pub fn segment_point(slice: &HuSlice, prompt: &Prompt2D, cfg: &SegmenterConfig) -> Result<Segmentation> {
    prompt.validate(slice.width, slice.height)?;
    let &(sx, sy) =
        prompt.positive.first().ok_or_else(|| Error::contract("point segmentation needs a positive point"))?;
    let band = neighborhood_stats(slice, sx, sy, cfg).band(cfg);
    let cap = cfg.area_cap(slice.width, slice.height);
    let (mut mask, runaway) =
        grow(slice.width, slice.height, &prompt.positive, cap, |x, y| band.contains(slice.get(x, y)));
    carve(slice, &mut mask, &prompt.negative, cfg);
    Ok(Segmentation { mask, runaway })
}

/// Exact Otsu split of `values`: returns the largest value of the lower
/// class, or `None` when all values are equal.
fn otsu_threshold(values: &[f32]) -> Option<f32> {
    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    let mut best: Option<(f64, f32)> = None;
    let mut sum_low = 0.0;
    for i in 0..sorted.len() - 1 {
        sum_low += sorted[i];
        if sorted[i] == sorted[i + 1] {
            continue;
        }
        let n_low = (i + 1) as f64;
        let n_high = n - n_low;
        let mean_low = sum_low / n_low;
        let mean_high = (total - sum_low) / n_high;
        let between = n_low * n_high * (mean_low - mean_high).powi(2);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, sorted[i] as f32));
        }
    }
    best.map(|(_, t)| t)
}

/// Labels 4-connected components of `fg`; returns components as pixel
/// lists in scan order of their first pixel.
fn components(fg: &Mask2D) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (fg.width(), fg.height());
    let mut seen = Mask2D::empty(w, h);
    let mut out = Vec::new();
    for (x, y) in fg.points() {
        if seen.get(x, y) {
            continue;
        }
        let (region, _) = grow(w, h, &[(x, y)], usize::MAX, |px, py| fg.get(px, py));
        seen.union_with(&region);
        out.push(region.points().collect());
    }
    out
}

/// Otsu threshold inside the box; the class whose mean is furthest from
/// the 2-pixel inner border ring is foreground; returns the foreground
/// component under the box center, else the largest one.
pub fn segment_bbox(slice: &HuSlice, prompt: &Prompt2D, cfg: &SegmenterConfig) -> Result<Segmentation> {
    prompt.validate(slice.width, slice.height)?;
    let b: BBox = prompt.bbox.ok_or_else(|| Error::contract("bbox segmentation needs a bbox"))?;
    let inside: Vec<(usize, usize)> = (b.y0..=b.y1).flat_map(|y| (b.x0..=b.x1).map(move |x| (x, y))).collect();
    let values: Vec<f32> = inside.iter().map(|&(x, y)| slice.get(x, y)).collect();
    let empty = Segmentation { mask: Mask2D::empty(slice.width, slice.height), runaway: false };
    let Some(t) = otsu_threshold(&values) else {
        return Ok(empty);
    };
    let ring = BandStats::from_values(
        inside
            .iter()
            .filter(|&&(x, y)| x < b.x0 + 2 || x + 2 > b.x1 || y < b.y0 + 2 || y + 2 > b.y1)
            .map(|&(x, y)| slice.get(x, y)),
    )
    .expect("box has a border");
    let low = BandStats::from_values(values.iter().copied().filter(|&v| v <= t)).expect("non-empty class");
    let high = BandStats::from_values(values.iter().copied().filter(|&v| v > t)).expect("non-empty class");
    let fg_high = (high.mean - ring.mean).abs() > (low.mean - ring.mean).abs();
    let fg = Mask2D::from_fn(slice.width, slice.height, |x, y| b.contains(x, y) && ((slice.get(x, y) > t) == fg_high));
    let comps = components(&fg);
    let (cx, cy) = b.center();
    let chosen = comps.iter().find(|c| c.contains(&(cx, cy))).or_else(|| {
        comps.iter().fold(None, |best: Option<&Vec<_>>, c| match best {
            Some(bc) if bc.len() >= c.len() => Some(bc),
            _ => Some(c),
        })
    });
    let Some(chosen) = chosen else {
        return Ok(empty);
    };
    let mut mask = Mask2D::empty(slice.width, slice.height);
    for &(x, y) in chosen {
        mask.set(x, y, true);
    }
    let cap = cfg.area_cap(slice.width, slice.height);
    let runaway = mask.count() > cap;
    Ok(Segmentation { mask, runaway })
}

/// Seeds from the prior mask eroded by one step (or the prior itself when
/// erosion empties it). Seeds whose intensity falls outside the band are
/// dropped; growth then proceeds as for point prompts.
///
/// The band comes from `prior.reference` when present (statistics of the
/// tissue under the seeds on the slice the prior came from), otherwise from
/// the current slice under the seeds.
pub fn segment_prior(slice: &HuSlice, prompt: &Prompt2D, cfg: &SegmenterConfig) -> Result<Segmentation> {
    prompt.validate(slice.width, slice.height)?;
    let prior = prompt.prior.as_ref().ok_or_else(|| Error::contract("prior segmentation needs a prior mask"))?;
    if prior.mask.is_empty() {
        return Err(Error::contract("prior mask is empty"));
    }
    let seeds_mask = prior_seeds(&prior.mask);
    let stats = match prior.reference {
        Some(r) => r,
        None => BandStats::under(slice, &seeds_mask).expect("seeds are non-empty"),
    };
    let band = stats.band(cfg);
    let mut seeds: Vec<(usize, usize)> = seeds_mask.points().filter(|&(x, y)| band.contains(slice.get(x, y))).collect();
    seeds.extend(prompt.positive.iter().copied());
    let cap = cfg.area_cap(slice.width, slice.height);
    let (mut mask, runaway) = grow(slice.width, slice.height, &seeds, cap, |x, y| band.contains(slice.get(x, y)));
    carve(slice, &mut mask, &prompt.negative, cfg);
    Ok(Segmentation { mask, runaway })
}

/// Seed set used by [`segment_prior`] for a given prior mask.
pub fn prior_seeds(prior: &Mask2D) -> Mask2D {
    let eroded = prior.eroded();
    if eroded.is_empty() {
        prior.clone()
    } else {
        eroded
    }
}

/// Prompt dispatch: prior mask, then bbox, then the first positive point.
/// Other positive points not already covered are grown from their own
/// neighborhood band and merged in (a growth that runs away contributes
/// only its seed); negative points always carve.
#[derive(Debug, Clone, Default)]
pub struct Builtin {
    cfg: SegmenterConfig,
}

impl Builtin {
    pub fn new(cfg: SegmenterConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &SegmenterConfig {
        &self.cfg
    }
}

impl Segmenter for Builtin {
    fn segment(&mut self, slice: &HuSlice, prompt: &Prompt2D) -> Result<Segmentation> {
        prompt.validate(slice.width, slice.height)?;
        let bare = Prompt2D { positive: vec![], negative: vec![], ..prompt.clone() };
        let mut base = if prompt.prior.is_some() {
            segment_prior(slice, &bare, &self.cfg)?
        } else if prompt.bbox.is_some() {
            segment_bbox(slice, &bare, &self.cfg)?
        } else {
            let &(x, y) = prompt.positive.first().ok_or_else(|| Error::contract("prompt has no positive point"))?;
            segment_point(slice, &Prompt2D::point(x, y), &self.cfg)?
        };
        for &(x, y) in &prompt.positive {
            if base.mask.get(x, y) {
                continue;
            }
            let extra = segment_point(slice, &Prompt2D::point(x, y), &self.cfg)?;
            if extra.runaway {
                base.mask.set(x, y, true);
            } else {
                base.mask.union_with(&extra.mask);
            }
        }
        carve(slice, &mut base.mask, &prompt.negative, &self.cfg);
        Ok(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::WindowSpec;
    use proptest::prelude::*;

    fn window() -> WindowSpec {
        WindowSpec::new(-1000.0, 1000.0).unwrap()
    }

    fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> HuSlice {
        let hu = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        HuSlice::new(w, h, hu, window()).unwrap()
    }

    fn in_disk(x: usize, y: usize, cx: f64, cy: f64, r: f64) -> bool {
        (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
    }

    fn disk_image() -> HuSlice {
        image(64, 64, |x, y| if in_disk(x, y, 32.0, 32.0, 8.0) { 60.0 } else { -800.0 })
    }

    /// Oracle: connected component containing `seed` of `{v : pred(v)}`,
    /// found by repeated relaxation rather than a queue.
    fn oracle_component(img: &HuSlice, seed: (usize, usize), pred: impl Fn(f32) -> bool) -> Mask2D {
        let mut m = Mask2D::empty(img.width, img.height);
        m.set(seed.0, seed.1, true);
        loop {
            let mut changed = false;
            for y in 0..img.height {
                for x in 0..img.width {
                    if m.get(x, y) || !pred(img.get(x, y)) {
                        continue;
                    }
                    let touch = (x > 0 && m.get(x - 1, y))
                        || (x + 1 < img.width && m.get(x + 1, y))
                        || (y > 0 && m.get(x, y - 1))
                        || (y + 1 < img.height && m.get(x, y + 1));
                    if touch {
                        m.set(x, y, true);
                        changed = true;
                    }
                }
            }
            if !changed {
                return m;
            }
        }
    }

    fn dice2(a: &Mask2D, b: &Mask2D) -> f64 {
        let (na, nb) = (a.count(), b.count());
        if na + nb == 0 {
            return 1.0;
        }
        2.0 * a.intersection_count(b) as f64 / (na + nb) as f64
    }

    #[test]
    fn point_on_disk_returns_disk() {
        let img = disk_image();
        let seg = segment_point(&img, &Prompt2D::point(32, 32), &SegmenterConfig::default()).unwrap();
        let oracle = oracle_component(&img, (32, 32), |v| (v - 60.0).abs() < 1.0);
        assert!(!seg.runaway);
        assert_eq!(seg.mask, oracle);
        assert_eq!(seg.mask.count(), Mask2D::from_fn(64, 64, |x, y| in_disk(x, y, 32.0, 32.0, 8.0)).count());
    }

    #[test]
    fn negative_inside_band_carves() {
        let img = disk_image();
        let cfg = SegmenterConfig::default();
        let prompt = Prompt2D { positive: vec![(32, 32)], negative: vec![(30, 33)], ..Default::default() };
        let seg = segment_point(&img, &prompt, &cfg).unwrap();
        let disk = oracle_component(&img, (32, 32), |v| (v - 60.0).abs() < 1.0);
        // The carved subregion is the component of the mask within the
        // negative point's band: here the whole disk.
        let mut expected = disk.clone();
        expected.subtract(&oracle_component(&img, (30, 33), |v| (v - 60.0).abs() < 1.0));
        assert_eq!(seg.mask, expected);
        assert!(dice2(&seg.mask, &disk) < 1.0);
        assert!(!seg.mask.get(30, 33));
    }

    #[test]
    fn negative_carves_only_its_own_tissue() {
        // A textured disk (wide band) touching a uniform bar (narrow band):
        // the positive seed leaks into the bar, the negative removes only
        // the bar.
        let img = image(64, 64, |x, y| {
            if in_disk(x, y, 24.0, 32.0, 8.0) {
                if (x + y) % 2 == 0 {
                    20.0
                } else {
                    100.0
                }
            } else if (32..50).contains(&x) && (30..35).contains(&y) {
                150.0
            } else {
                -800.0
            }
        });
        let cfg = SegmenterConfig::default();
        let leak = segment_point(&img, &Prompt2D::point(24, 32), &cfg).unwrap();
        assert!(leak.mask.get(45, 32));
        let prompt = Prompt2D { positive: vec![(24, 32)], negative: vec![(45, 32)], ..Default::default() };
        let carved = segment_point(&img, &prompt, &cfg).unwrap();
        assert!(!carved.mask.get(45, 32));
        assert!(carved.mask.get(24, 32));
        assert_eq!(
            carved.mask.count()
                + leak.mask.intersection_count(&Mask2D::from_fn(64, 64, |x, y| {
                    (32..50).contains(&x) && (30..35).contains(&y) && !in_disk(x, y, 24.0, 32.0, 8.0)
                })),
            leak.mask.count()
        );
    }

    #[test]
    fn constant_image_runs_away() {
        let img = image(32, 32, |_, _| 10.0);
        let seg = segment_point(&img, &Prompt2D::point(3, 3), &SegmenterConfig::default()).unwrap();
        assert!(seg.runaway);
        assert_eq!(seg.mask.count(), 256);
    }

    #[test]
    fn seed_outside_image_is_index_error() {
        let img = disk_image();
        let err = segment_point(&img, &Prompt2D::point(64, 0), &SegmenterConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Index(_)));
    }

    #[test]
    fn bbox_on_disk_returns_disk() {
        let img = disk_image();
        let b = BBox::new(24 - 15, 24 - 15, 40 + 15, 40 + 15);
        let seg = segment_bbox(&img, &Prompt2D::bbox(b), &SegmenterConfig::default()).unwrap();
        assert_eq!(seg.mask, oracle_component(&img, (32, 32), |v| v > -100.0));
    }

    #[test]
    fn bbox_handles_hypoattenuating_lesion() {
        let img = image(64, 64, |x, y| if in_disk(x, y, 32.0, 32.0, 8.0) { 10.0 } else { 60.0 });
        let seg = segment_bbox(&img, &Prompt2D::bbox(BBox::new(10, 10, 54, 54)), &SegmenterConfig::default()).unwrap();
        assert_eq!(seg.mask, oracle_component(&img, (32, 32), |v| v < 30.0));
    }

    #[test]
    fn bbox_over_background_is_empty() {
        let img = disk_image();
        let seg = segment_bbox(&img, &Prompt2D::bbox(BBox::new(0, 0, 15, 15)), &SegmenterConfig::default()).unwrap();
        assert!(seg.mask.is_empty());
    }

    #[test]
    fn bbox_picks_component_under_center() {
        let img =
            image(
                64,
                64,
                |x, y| {
                    if in_disk(x, y, 30.0, 30.0, 5.0) || in_disk(x, y, 46.0, 46.0, 4.0) {
                        60.0
                    } else {
                        -800.0
                    }
                },
            );
        let b = BBox::new(18, 18, 44, 44);
        let seg = segment_bbox(&img, &Prompt2D::bbox(b), &SegmenterConfig::default()).unwrap();
        let a = oracle_component(&img, (30, 30), |v| v > 0.0);
        assert_eq!(seg.mask, a);
        // Center on background: the largest foreground component wins.
        let b = BBox::new(20, 20, 52, 52);
        let seg = segment_bbox(&img, &Prompt2D::bbox(b), &SegmenterConfig::default()).unwrap();
        assert!(seg.mask.count() > 0);
        assert!(seg.mask.points().all(|(x, y)| b.contains(x, y)));
    }

    #[test]
    fn degenerate_bbox_rejected() {
        let img = disk_image();
        let err = segment_bbox(&img, &Prompt2D::bbox(BBox::new(5, 5, 5, 20)), &SegmenterConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn prior_tracks_identical_disk() {
        let img = disk_image();
        let disk = oracle_component(&img, (32, 32), |v| v > 0.0);
        let reference = BandStats::under(&img, &prior_seeds(&disk));
        let seg = segment_prior(&img, &Prompt2D::prior(disk.clone(), reference), &SegmenterConfig::default()).unwrap();
        assert_eq!(seg.mask, disk);
        // Without reference statistics the band is measured on this slice.
        let seg = segment_prior(&img, &Prompt2D::prior(disk.clone(), None), &SegmenterConfig::default()).unwrap();
        assert_eq!(seg.mask, disk);
    }

    #[test]
    fn prior_over_background_is_empty() {
        let img = disk_image();
        let disk = oracle_component(&img, (32, 32), |v| v > 0.0);
        let reference = BandStats::under(&img, &prior_seeds(&disk));
        let bg = image(64, 64, |_, _| -800.0);
        let seg = segment_prior(&bg, &Prompt2D::prior(disk, reference), &SegmenterConfig::default()).unwrap();
        assert!(seg.mask.is_empty());
        assert!(!seg.runaway);
    }

    #[test]
    fn single_voxel_prior_is_its_own_seed() {
        let img = disk_image();
        let single = Mask2D::from_fn(64, 64, |x, y| (x, y) == (32, 32));
        assert_eq!(prior_seeds(&single), single);
        let seg = segment_prior(&img, &Prompt2D::prior(single, None), &SegmenterConfig::default()).unwrap();
        assert_eq!(seg.mask.count(), Mask2D::from_fn(64, 64, |x, y| in_disk(x, y, 32.0, 32.0, 8.0)).count());
    }

    #[test]
    fn empty_prior_rejected() {
        let img = disk_image();
        let p = Prompt2D::prior(Mask2D::empty(64, 64), None);
        assert!(matches!(segment_prior(&img, &p, &SegmenterConfig::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn otsu_examples() {
        assert_eq!(otsu_threshold(&[1.0, 1.0, 1.0]), None);
        assert_eq!(otsu_threshold(&[0.0, 0.0, 10.0, 10.0]), Some(0.0));
        assert_eq!(otsu_threshold(&[0.0, 1.0, 9.0, 10.0]), Some(1.0));
    }

    #[test]
    fn builtin_bbox_plus_point_contains_point() {
        let img = disk_image();
        let mut seg = Builtin::default();
        let p = Prompt2D { positive: vec![(30, 30)], bbox: Some(BBox::new(10, 10, 54, 54)), ..Default::default() };
        let out = seg.segment(&img, &p).unwrap();
        assert!(out.mask.get(30, 30));
        assert_eq!(out.mask, seg.segment(&img, &Prompt2D::bbox(BBox::new(10, 10, 54, 54))).unwrap().mask);
    }

    /// Left half of a disk at 20 HU, right half at 120 HU.
    fn two_tone_disk() -> HuSlice {
        image(64, 64, |x, y| match (in_disk(x, y, 32.0, 32.0, 10.0), x < 32) {
            (false, _) => -800.0,
            (true, true) => 20.0,
            (true, false) => 120.0,
        })
    }

    #[test]
    fn prior_plus_uncovered_positive_grows_its_own_band() {
        let img = two_tone_disk();
        let left = Mask2D::from_fn(64, 64, |x, y| in_disk(x, y, 32.0, 32.0, 10.0) && x < 32);
        let whole = Mask2D::from_fn(64, 64, |x, y| in_disk(x, y, 32.0, 32.0, 10.0));
        let mut seg = Builtin::default();
        let alone = seg.segment(&img, &Prompt2D::prior(left.clone(), None)).unwrap();
        assert_eq!(alone.mask, left);
        let p = Prompt2D { positive: vec![(38, 32)], ..Prompt2D::prior(left, None) };
        assert_eq!(seg.segment(&img, &p).unwrap().mask, whole);
    }

    #[test]
    fn second_point_uses_its_own_band_but_runaway_adds_only_seed() {
        let img = two_tone_disk();
        let whole = Mask2D::from_fn(64, 64, |x, y| in_disk(x, y, 32.0, 32.0, 10.0));
        let mut seg = Builtin::default();
        let p = Prompt2D { positive: vec![(26, 32), (38, 32)], ..Default::default() };
        assert_eq!(seg.segment(&img, &p).unwrap().mask, whole);
        // Background click: its growth hits the cap and is reduced to the seed.
        let p = Prompt2D { positive: vec![(26, 32), (2, 2)], ..Default::default() };
        let out = seg.segment(&img, &p).unwrap();
        assert!(!out.runaway);
        assert!(out.mask.get(2, 2));
        assert_eq!(
            out.mask.count(),
            1 + Mask2D::from_fn(64, 64, |x, y| in_disk(x, y, 32.0, 32.0, 10.0) && x < 32).count()
        );
    }

    fn noisy_blob() -> impl Strategy<Value = (Vec<f32>, (usize, usize), Vec<(usize, usize)>)> {
        (
            proptest::collection::vec(-60.0f32..60.0, 24 * 24),
            (0usize..24, 0usize..24),
            proptest::collection::vec((0usize..24, 0usize..24), 0..3),
        )
    }

    proptest! {
        #[test]
        fn point_contains_seed_and_excludes_negatives((noise, seed, negs) in noisy_blob()) {
            let hu: Vec<f32> = noise.iter().enumerate().map(|(i, n)| {
                let (x, y) = (i % 24, i / 24);
                if in_disk(x, y, 12.0, 12.0, 6.0) { 40.0 + n } else { -400.0 + n }
            }).collect();
            let img = HuSlice::new(24, 24, hu, window()).unwrap();
            let negs: Vec<_> = negs.into_iter().filter(|n| *n != seed).collect();
            let prompt = Prompt2D { positive: vec![seed], negative: negs.clone(), ..Default::default() };
            let cfg = SegmenterConfig::default();
            let a = segment_point(&img, &prompt, &cfg).unwrap();
            let b = segment_point(&img, &prompt, &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            for n in &negs {
                prop_assert!(!a.mask.get(n.0, n.1));
            }
            if negs.is_empty() {
                prop_assert!(a.mask.get(seed.0, seed.1));
            }
        }

        #[test]
        fn bbox_output_inside_box(noise in proptest::collection::vec(-50.0f32..50.0, 32 * 32),
                                  x0 in 0usize..20, y0 in 0usize..20, w in 2usize..12, h in 2usize..12) {
            let hu: Vec<f32> = noise.iter().enumerate().map(|(i, n)| {
                let (x, y) = (i % 32, i / 32);
                if in_disk(x, y, 14.0, 15.0, 5.0) { 80.0 + n } else { n - 300.0 }
            }).collect();
            let img = HuSlice::new(32, 32, hu, window()).unwrap();
            let b = BBox::new(x0, y0, x0 + w, y0 + h);
            let seg = segment_bbox(&img, &Prompt2D::bbox(b), &SegmenterConfig::default()).unwrap();
            prop_assert!(seg.mask.points().all(|(x, y)| b.contains(x, y)));
        }
    }
}
