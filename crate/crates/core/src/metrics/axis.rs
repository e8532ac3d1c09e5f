//! In-plane diameters: convex hull plus rotating calipers over boundary
//! voxel centers of each axial slice.

use crate::volume::Mask2D;

pub type Pt = (i64, i64);

/// Mask pixels with a 4-neighbor outside the mask or on the image edge.
pub fn boundary_points(mask: &Mask2D) -> Vec<Pt> {
    let (w, h) = (mask.width(), mask.height());
    mask.points()
        .filter(|&(x, y)| {
            x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1)
        })
        .map(|(x, y)| (x as i64, y as i64))
        .collect()
}

fn cross(o: Pt, a: Pt, b: Pt) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull without collinear points (monotone chain).
pub fn convex_hull(points: &[Pt]) -> Vec<Pt> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Pt> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Pt>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 2 {
        hull = vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

#[inline]
pub fn dist2(a: Pt, b: Pt, sx: f64, sy: f64) -> f64 {
    let dx = (a.0 - b.0) as f64 * sx;
    let dy = (a.1 - b.1) as f64 * sy;
    dx * dx + dy * dy
}

/// Pair with the canonical (smaller point first) orientation.
#[inline]
pub fn ordered(a: Pt, b: Pt) -> (Pt, Pt) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// `true` when `cand` beats `best`: longer, or equally long and
/// lexicographically smaller.
#[inline]
pub fn better(cand: (f64, (Pt, Pt)), best: Option<(f64, (Pt, Pt))>) -> bool {
    match best {
        None => true,
        Some((d, pair)) => cand.0 > d || (cand.0 == d && cand.1 < pair),
    }
}

/// All antipodal vertex pairs of a ccw convex polygon. Antipodality is
/// affine-invariant, so the pairs hold for any axis scaling.
fn antipodal_pairs(hull: &[Pt]) -> Vec<(usize, usize)> {
    let n = hull.len();
    if n < 3 {
        return if n == 2 { vec![(0, 1)] } else { vec![] };
    }
    let edge = |i: usize| (hull[(i + 1) % n].0 - hull[i].0, hull[(i + 1) % n].1 - hull[i].1);
    let ecross = |a: (i64, i64), b: (i64, i64)| a.0 * b.1 - a.1 * b.0;
    let mut pairs = Vec::new();
    let mut j = 1;
    for i in 0..n {
        let ei = edge(i);
        // Advance j while the next edge still turns away from edge i.
        let mut steps = 0;
        while ecross(ei, edge(j)) > 0 && steps < n {
            j = (j + 1) % n;
            steps += 1;
        }
        pairs.push((i, j));
        pairs.push(((i + 1) % n, j));
        if ecross(ei, edge(j)) == 0 {
            pairs.push((i, (j + 1) % n));
            pairs.push(((i + 1) % n, (j + 1) % n));
        }
    }
    pairs
}

/// Farthest pair (squared mm distance, canonical endpoints) of `points`.
pub fn diameter(points: &[Pt], sx: f64, sy: f64) -> Option<(f64, (Pt, Pt))> {
    let hull = convex_hull(points);
    match hull.len() {
        0 => None,
        1 => Some((0.0, (hull[0], hull[0]))),
        _ => {
            let mut best = None;
            for (i, j) in antipodal_pairs(&hull) {
                let cand = (dist2(hull[i], hull[j], sx, sy), ordered(hull[i], hull[j]));
                if better(cand, best) {
                    best = Some(cand);
                }
            }
            best
        }
    }
}

/// Width of the projections of `points` onto the normal of `a -> b`, in mm.
pub fn perpendicular_width(points: &[Pt], a: Pt, b: Pt, sx: f64, sy: f64) -> f64 {
    let ux = (b.0 - a.0) as f64 * sx;
    let uy = (b.1 - a.1) as f64 * sy;
    let len = (ux * ux + uy * uy).sqrt();
    if len == 0.0 {
        return 0.0;
    }
    let (nx, ny) = (-uy / len, ux / len);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(x, y) in points {
        let p = x as f64 * sx * nx + y as f64 * sy * ny;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Pt], sx: f64, sy: f64) -> Option<(f64, (Pt, Pt))> {
        let mut best = None;
        for &a in points {
            for &b in points {
                let cand = (dist2(a, b, sx, sy), ordered(a, b));
                if better(cand, best) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    #[test]
    fn hull_of_square_with_interior_and_edge_points() {
        let pts: Vec<Pt> = (0..3).flat_map(|x| (0..3).map(move |y| (x, y))).collect();
        assert_eq!(convex_hull(&pts), vec![(0, 0), (2, 0), (2, 2), (0, 2)]);
    }

    #[test]
    fn collinear_points_give_segment() {
        let pts = [(0, 0), (1, 0), (3, 0), (2, 0)];
        assert_eq!(convex_hull(&pts), vec![(0, 0), (3, 0)]);
        assert_eq!(diameter(&pts, 1.0, 1.0), Some((9.0, ((0, 0), (3, 0)))));
    }

    #[test]
    fn anisotropic_spacing_changes_winner() {
        let pts = [(0, 0), (4, 0), (0, 3)];
        assert_eq!(diameter(&pts, 1.0, 1.0).unwrap().1, ((0, 3), (4, 0)));
        assert_eq!(diameter(&pts, 0.5, 2.0).unwrap(), (40.0, ((0, 3), (4, 0))));
        let rect = [(0, 0), (4, 0), (0, 3), (4, 3)];
        assert_eq!(diameter(&rect, 1.0, 1.0).unwrap(), (25.0, ((0, 0), (4, 3))));
        assert_eq!(diameter(&rect, 1.0, 2.0).unwrap(), (52.0, ((0, 0), (4, 3))));
    }

    proptest! {
        #[test]
        fn calipers_match_brute_force(
            pts in proptest::collection::vec((0i64..32, 0i64..32), 1..60),
            sx in prop_oneof![Just(1.0), 0.3f64..3.0],
            sy in prop_oneof![Just(1.0), 0.3f64..3.0],
        ) {
            prop_assert_eq!(diameter(&pts, sx, sy), brute(&pts, sx, sy));
        }
    }
}
