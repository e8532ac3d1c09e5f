//! In-memory CT volumes, binary masks and axial slices.
//!
//! All 3D grids are stored row-major with x fastest, then y, then z, so the
//! sample at `(x, y, z)` lives at `x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts `[nx, ny, nz]`.
pub type Dims = [usize; 3];
/// Millimeters per voxel `[sx, sy, sz]`.
pub type Spacing = [f64; 3];

fn check_grid(dims: Dims, spacing: Spacing, len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::format("dims", format!("all dims must be >= 1, got {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::format("spacing", format!("all spacings must be > 0, got {spacing:?}")));
    }
    let expected = dims[0] * dims[1] * dims[2];
    if len != expected {
        return Err(Error::SizeMismatch { expected, actual: len });
    }
    Ok(())
}

/// A CT scan: Hounsfield-unit samples on a regular grid.
#[derive(Clone, PartialEq)]
pub struct CtVolume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f32>,
}

impl CtVolume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        check_grid(dims, spacing, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format("data", format!("non-finite HU sample at element {i}")));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    fn check_z(&self, z: usize) -> Result<()> {
        if z >= self.dims[2] {
            return Err(Error::Index(format!("slice {z} outside 0..{}", self.dims[2])));
        }
        Ok(())
    }

    fn slice_samples(&self, z: usize) -> &[f32] {
        let n = self.dims[0] * self.dims[1];
        &self.data[z * n..(z + 1) * n]
    }

    /// HU samples of slice `z` clamped to the window; this is what the
    /// built-in segmenter consumes.
    pub fn hu_slice(&self, z: usize, window: WindowSpec) -> Result<HuSlice> {
        self.check_z(z)?;
        let hu = self.slice_samples(z).iter().map(|&v| window.clamp(v)).collect();
        Ok(HuSlice { width: self.dims[0], height: self.dims[1], hu, window })
    }

    /// 8-bit display image of slice `z`.
    pub fn window_slice(&self, z: usize, window: WindowSpec) -> Result<GrayImage> {
        self.check_z(z)?;
        let pixels = self.slice_samples(z).iter().map(|&v| window.to_u8(v)).collect();
        Ok(GrayImage { width: self.dims[0], height: self.dims[1], pixels })
    }
}

/// Display/segmentation intensity window in HU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lo: f64,
    pub hi: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { lo: -500.0, hi: 1000.0 }
    }
}

impl WindowSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::contract(format!("window requires lo < hi, got ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn clamp(&self, v: f32) -> f32 {
        (v as f64).clamp(self.lo, self.hi) as f32
    }

    /// `round(255 * (clamp(v) - lo) / (hi - lo))`, halves rounded up.
    #[inline]
    pub fn to_u8(&self, v: f32) -> u8 {
        let c = (v as f64).clamp(self.lo, self.hi);
        let scaled = (c - self.lo) * 255.0 / (self.hi - self.lo);
        (scaled + 0.5).floor().min(255.0) as u8
    }
}

/// One axial slice of HU values, already clamped to `window`.
#[derive(Clone, PartialEq)]
pub struct HuSlice {
    pub width: usize,
    pub height: usize,
    pub hu: Vec<f32>,
    pub window: WindowSpec,
}

impl HuSlice {
    pub fn new(width: usize, height: usize, hu: Vec<f32>, window: WindowSpec) -> Result<Self> {
        if hu.len() != width * height {
            return Err(Error::SizeMismatch { expected: width * height, actual: hu.len() });
        }
        Ok(Self { width, height, hu, window })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.hu[x + self.width * y]
    }

    /// The 8-bit rendering sent to external segmenters.
    pub fn to_u8(&self) -> Vec<u8> {
        self.hu.iter().map(|&v| self.window.to_u8(v)).collect()
    }
}

/// 8-bit grayscale image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Binary mask of a single axial slice.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask2D {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask2D {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::SizeMismatch { expected: width * height, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[x + self.width * y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[x + self.width * y] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Coordinates of set pixels in scan order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Tight bounds `(x0, y0, x1, y1)`, inclusive.
    pub fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut it = self.points();
        let (x, y) = it.next()?;
        let mut b = (x, y, x, y);
        for (x, y) in it {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        Some(b)
    }

    pub fn intersection_count(&self, other: &Mask2D) -> usize {
        self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count()
    }

    pub fn union_with(&mut self, other: &Mask2D) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    pub fn subtract(&mut self, other: &Mask2D) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a &= !*b;
        }
    }

    /// One 4-connected erosion step; pixels at the image edge are removed.
    pub fn eroded(&self) -> Mask2D {
        let (w, h) = (self.width, self.height);
        Mask2D::from_fn(w, h, |x, y| {
            self.get(x, y)
                && x > 0
                && y > 0
                && x + 1 < w
                && y + 1 < h
                && self.get(x - 1, y)
                && self.get(x + 1, y)
                && self.get(x, y - 1)
                && self.get(x, y + 1)
        })
    }

    /// One 4-connected dilation step.
    pub fn dilated(&self) -> Mask2D {
        let (w, h) = (self.width, self.height);
        Mask2D::from_fn(w, h, |x, y| {
            self.get(x, y)
                || (x > 0 && self.get(x - 1, y))
                || (x + 1 < w && self.get(x + 1, y))
                || (y > 0 && self.get(x, y - 1))
                || (y + 1 < h && self.get(x, y + 1))
        })
    }
}

/// Binary segmentation on the grid of a CT volume.
#[derive(Clone, PartialEq)]
pub struct MaskVolume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<bool>,
}

impl MaskVolume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<bool>) -> Result<Self> {
        check_grid(dims, spacing, data.len())?;
        Ok(Self { dims, spacing, data })
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        Self { dims, spacing, data: vec![false; dims[0] * dims[1] * dims[2]] }
    }

    pub fn empty_like(vol: &CtVolume) -> Self {
        Self::empty(vol.dims(), vol.spacing())
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { dims, spacing, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    /// Same mask on a grid with different spacing.
    pub fn with_spacing(&self, spacing: Spacing) -> Result<Self> {
        Self::new(self.dims, spacing, self.data.clone())
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.dims[0]
            && (y as usize) < self.dims[1]
            && (z as usize) < self.dims[2]
            && self.get(x as usize, y as usize, z as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn same_grid(&self, other: &MaskVolume) -> bool {
        self.dims == other.dims
    }

    pub fn check_same_grid(&self, other: &MaskVolume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::contract(format!("mask dims differ: {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    /// Set voxels as `(x, y, z)` in storage order.
    pub fn points(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, _] = self.dims;
        self.data.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| [i % nx, (i / nx) % ny, i / (nx * ny)])
    }

    pub fn slice(&self, z: usize) -> Mask2D {
        let n = self.dims[0] * self.dims[1];
        Mask2D { width: self.dims[0], height: self.dims[1], data: self.data[z * n..(z + 1) * n].to_vec() }
    }

    pub fn set_slice(&mut self, z: usize, m: &Mask2D) {
        let n = self.dims[0] * self.dims[1];
        self.data[z * n..(z + 1) * n].copy_from_slice(&m.data);
    }

    pub fn slice_count(&self, z: usize) -> usize {
        let n = self.dims[0] * self.dims[1];
        self.data[z * n..(z + 1) * n].iter().filter(|&&b| b).count()
    }

    /// Sorted z indices of non-empty slices.
    pub fn occupied_slices(&self) -> Vec<usize> {
        (0..self.dims[2]).filter(|&z| self.slice_count(z) > 0).collect()
    }

    pub fn intersection_count(&self, other: &MaskVolume) -> usize {
        self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count()
    }

    pub fn union_with(&mut self, other: &MaskVolume) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    /// Voxels in `self` but not in `other`.
    pub fn difference(&self, other: &MaskVolume) -> MaskVolume {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && !*b).collect();
        MaskVolume { dims: self.dims, spacing: self.spacing, data }
    }

    /// Voxel-count barycenter in voxel coordinates.
    pub fn barycenter(&self) -> Option<[f64; 3]> {
        let mut sum = [0.0f64; 3];
        let mut n = 0usize;
        for p in self.points() {
            for a in 0..3 {
                sum[a] += p[a] as f64;
            }
            n += 1;
        }
        (n > 0).then(|| sum.map(|s| s / n as f64))
    }
}

macro_rules! summary_debug {
    ($t:ty, $($field:ident),*) => {
        impl std::fmt::Debug for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.debug_struct(stringify!($t))
                    $(.field(stringify!($field), &self.$field))*
                    .finish_non_exhaustive()
            }
        }
    };
}

summary_debug!(CtVolume, dims, spacing);
summary_debug!(HuSlice, width, height, window);
summary_debug!(GrayImage, width, height);

impl std::fmt::Debug for Mask2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mask2D {{ {}x{}, count: {}, bounds: {:?} }}", self.width, self.height, self.count(), self.bounds())
    }
}

impl std::fmt::Debug for MaskVolume {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "MaskVolume {{ dims: {:?}, spacing: {:?}, count: {}, slices: {:?} }}",
            self.dims,
            self.spacing,
            self.count(),
            self.occupied_slices()
        )
    }
}
