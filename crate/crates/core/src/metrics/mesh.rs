//! Marching-cubes isosurface of a binary mask and mesh smoothing.
//!
//! The field is 1 inside the mask and 0 outside (including a one-voxel pad
//! around the grid), sampled at voxel centers. At iso-level 0.5 every
//! crossing sits at an edge midpoint.

use std::collections::HashMap;

use super::tables::TRI_TABLE;
use crate::volume::MaskVolume;

/// Corner offsets, Bourke numbering.
const CORNERS: [[i64; 3]; 8] = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

const EDGES: [(usize, usize); 12] =
    [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (0, 4), (1, 5), (2, 6), (3, 7)];

/// Indexed triangle mesh with welded vertices, coordinates in mm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                let u = sub(b, a);
                let v = sub(c, a);
                0.5 * norm(cross(u, v))
            })
            .sum()
    }

    /// Taubin λ|μ smoothing with uniform umbrella weights: each iteration
    /// applies a shrinking step λ and an inflating step μ.
    pub fn taubin(&mut self, iterations: usize, lambda: f64, mu: f64) {
        let neighbors = self.neighbors();
        for _ in 0..iterations {
            self.laplacian_step(&neighbors, lambda);
            self.laplacian_step(&neighbors, mu);
        }
    }

    fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut n: Vec<Vec<u32>> = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                n[a as usize].push(b);
                n[b as usize].push(a);
            }
        }
        for list in &mut n {
            list.sort_unstable();
            list.dedup();
        }
        n
    }

    fn laplacian_step(&mut self, neighbors: &[Vec<u32>], factor: f64) {
        let next: Vec<[f64; 3]> = self
            .vertices
            .iter()
            .zip(neighbors)
            .map(|(&p, nb)| {
                if nb.is_empty() {
                    return p;
                }
                let mut c = [0.0; 3];
                for &j in nb {
                    let q = self.vertices[j as usize];
                    for a in 0..3 {
                        c[a] += q[a];
                    }
                }
                let inv = 1.0 / nb.len() as f64;
                [0, 1, 2].map(|a| p[a] + factor * (c[a] * inv - p[a]))
            })
            .collect();
        self.vertices = next;
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Marching cubes on the binary field of `mask` at iso-level 0.5, using the
/// base case table (no asymptotic decider). Vertices shared between cubes
/// are merged.
pub fn marching_cubes(mask: &MaskVolume) -> Mesh {
    let mut mesh = Mesh::default();
    let Some((lo, hi)) = bounds(mask) else {
        return mesh;
    };
    let s = mask.spacing();
    let mut welded: HashMap<([i64; 3], usize), u32> = HashMap::new();
    let inside = |p: [i64; 3]| mask.contains(p[0], p[1], p[2]);
    for z in lo[2] - 1..=hi[2] {
        for y in lo[1] - 1..=hi[1] {
            for x in lo[0] - 1..=hi[0] {
                let base = [x, y, z];
                let corner = |i: usize| [base[0] + CORNERS[i][0], base[1] + CORNERS[i][1], base[2] + CORNERS[i][2]];
                let mut case = 0usize;
                for i in 0..8 {
                    if !inside(corner(i)) {
                        case |= 1 << i;
                    }
                }
                let row = &TRI_TABLE[case];
                let mut k = 0;
                while k < 16 && row[k] >= 0 {
                    let mut tri = [0u32; 3];
                    for (slot, &edge) in tri.iter_mut().zip(&row[k..k + 3]) {
                        let (a, b) = EDGES[edge as usize];
                        let (pa, pb) = (corner(a), corner(b));
                        let axis = (0..3).find(|&d| pa[d] != pb[d]).expect("edge spans one axis");
                        let origin = if pa[axis] < pb[axis] { pa } else { pb };
                        let next = mesh.vertices.len() as u32;
                        *slot = *welded.entry((origin, axis)).or_insert_with(|| {
                            let mut v = [origin[0] as f64, origin[1] as f64, origin[2] as f64];
                            v[axis] += 0.5;
                            mesh.vertices.push([v[0] * s[0], v[1] * s[1], v[2] * s[2]]);
                            next
                        });
                    }
                    mesh.triangles.push(tri);
                    k += 3;
                }
            }
        }
    }
    mesh
}

fn bounds(mask: &MaskVolume) -> Option<([i64; 3], [i64; 3])> {
    let mut it = mask.points();
    let first = it.next()?;
    let mut lo = first.map(|v| v as i64);
    let mut hi = lo;
    for p in it {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a] as i64);
            hi[a] = hi[a].max(p[a] as i64);
        }
    }
    Some((lo, hi))
}
