//! 2D lesion segmentation from visual prompts.
//!
//! [`Builtin`] is a deterministic classical segmenter (seeded region
//! growing, Otsu inside a box, prior-mask seeding). [`external`] speaks the
//! line-delimited `segproto/1` protocol to a child process so a learned
//! model can stand in for it.

mod builtin;
pub mod external;
pub mod rle;

use serde::{Deserialize, Serialize};

pub use builtin::{prior_seeds, segment_bbox, segment_point, segment_prior, BandStats, Builtin};
pub use external::ExternalSegmenter;

use crate::error::{Error, Result};
use crate::volume::{HuSlice, Mask2D};

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn center(&self) -> (usize, usize) {
        ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }

    pub fn to_array(&self) -> [usize; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    /// A box needs positive extent in both directions.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.x1 <= self.x0 || self.y1 <= self.y0 {
            return Err(Error::contract(format!("degenerate bbox {:?}", self.to_array())));
        }
        if self.x1 >= width || self.y1 >= height {
            return Err(Error::contract(format!("bbox {:?} outside {width}x{height} slice", self.to_array())));
        }
        Ok(())
    }
}

/// Mask from the adjacent slice, with the intensity statistics of the
/// tissue it covered there.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMask {
    pub mask: Mask2D,
    pub reference: Option<BandStats>,
}

/// Visual prompt for one axial slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prompt2D {
    pub positive: Vec<(usize, usize)>,
    pub negative: Vec<(usize, usize)>,
    pub bbox: Option<BBox>,
    pub prior: Option<PriorMask>,
}

impl Prompt2D {
    pub fn point(x: usize, y: usize) -> Self {
        Self { positive: vec![(x, y)], ..Default::default() }
    }

    pub fn bbox(b: BBox) -> Self {
        Self { bbox: Some(b), ..Default::default() }
    }

    pub fn prior(mask: Mask2D, reference: Option<BandStats>) -> Self {
        Self { prior: Some(PriorMask { mask, reference }), ..Default::default() }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.positive.is_empty() && self.bbox.is_none() && self.prior.is_none() {
            return Err(Error::contract("prompt needs a positive point, a bbox or a prior mask"));
        }
        for &(x, y) in self.positive.iter().chain(&self.negative) {
            if x >= width || y >= height {
                return Err(Error::Index(format!("point ({x}, {y}) outside {width}x{height} slice")));
            }
        }
        if let Some(b) = &self.bbox {
            b.validate(width, height)?;
        }
        if let Some(p) = &self.prior {
            if p.mask.width() != width || p.mask.height() != height {
                return Err(Error::contract(format!(
                    "prior mask is {}x{}, slice is {width}x{height}",
                    p.mask.width(),
                    p.mask.height()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    /// Half-width of the intensity band in standard deviations.
    pub band_k: f64,
    /// Side of the square neighborhood used for seed statistics.
    pub neighborhood: usize,
    /// Lower bound on the band's standard deviation, HU.
    pub sigma_floor: f64,
    /// Largest region, as a fraction of the slice, before growth is
    /// declared a runaway.
    pub max_area_fraction: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self { band_k: 2.5, neighborhood: 5, sigma_floor: 5.0, max_area_fraction: 0.25 }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_k > 0.0) {
            return Err(Error::contract(format!("band_k must be > 0, got {}", self.band_k)));
        }
        if !(self.max_area_fraction > 0.0 && self.max_area_fraction <= 1.0) {
            return Err(Error::contract(format!(
                "max_area_fraction must be in (0, 1], got {}",
                self.max_area_fraction
            )));
        }
        if self.neighborhood == 0 || self.neighborhood.is_multiple_of(2) {
            return Err(Error::contract("neighborhood must be odd and positive"));
        }
        Ok(())
    }

    fn area_cap(&self, width: usize, height: usize) -> usize {
        ((self.max_area_fraction * (width * height) as f64).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: Mask2D,
    /// Growth hit the area cap; the mask is truncated.
    pub runaway: bool,
}

pub trait Segmenter: Send {
    fn segment(&mut self, slice: &HuSlice, prompt: &Prompt2D) -> Result<Segmentation>;
}

impl<S: Segmenter + ?Sized> Segmenter for Box<S> {
    fn segment(&mut self, slice: &HuSlice, prompt: &Prompt2D) -> Result<Segmentation> {
        (**self).segment(slice, prompt)
    }
}

/// Which segmenter to instantiate: `builtin` or `external:<command>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmenterChoice {
    Builtin,
    External(String),
}

impl SegmenterChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "builtin" => Ok(Self::Builtin),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(Self::External(cmd.to_string())),
                _ => Err(Error::contract(format!("unknown segmenter {s:?}; expected builtin or external:<cmd>"))),
            },
        }
    }

    pub fn instantiate(&self, cfg: SegmenterConfig) -> Result<Box<dyn Segmenter>> {
        match self {
            Self::Builtin => Ok(Box::new(Builtin::new(cfg)?)),
            Self::External(cmd) => Ok(Box::new(ExternalSegmenter::spawn(cmd)?)),
        }
    }
}

impl std::fmt::Display for SegmenterChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Builtin => write!(f, "builtin"),
            Self::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_validation() {
        assert!(Prompt2D::default().validate(8, 8).is_err());
        assert!(Prompt2D::point(8, 0).validate(8, 8).is_err());
        assert!(Prompt2D::point(7, 7).validate(8, 8).is_ok());
        assert!(Prompt2D::bbox(BBox::new(2, 2, 2, 5)).validate(8, 8).is_err());
        assert!(Prompt2D::bbox(BBox::new(2, 2, 8, 5)).validate(8, 8).is_err());
        assert!(Prompt2D::bbox(BBox::new(2, 2, 7, 5)).validate(8, 8).is_ok());
        let p = Prompt2D::prior(Mask2D::empty(4, 4), None);
        assert!(p.validate(8, 8).is_err());
    }

    #[test]
    fn choice_parsing() {
        assert_eq!(SegmenterChoice::parse("builtin").unwrap(), SegmenterChoice::Builtin);
        assert_eq!(
            SegmenterChoice::parse("external:python3 seg.py").unwrap(),
            SegmenterChoice::External("python3 seg.py".into())
        );
        assert!(SegmenterChoice::parse("external:").is_err());
        assert!(SegmenterChoice::parse("sam").is_err());
    }
}
