//! ROI geometry: tight boxes, millimetre padding, squaring and scale jitter.
//!
//! Boxes are half-open, `[x0, x1) x [y0, y1)`. Whenever a grown box would
//! leave the frame it is shifted back inside first and only truncated when
//! it is larger than the frame itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dims, Spacing};
use crate::plan::AnatomyPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub const fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub const fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub const fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub const fn dims(&self) -> Dims {
        Dims::new(self.width(), self.height())
    }

    pub const fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub const fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub const fn contains_box(&self, other: &BoundingBox) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    pub const fn is_within(&self, frame: Dims) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= frame.width && self.y1 <= frame.height
    }

    pub fn ensure_within(&self, frame: Dims) -> Result<()> {
        if self.is_within(frame) {
            Ok(())
        } else {
            Err(Error::BoxOutOfFrame {
                x0: self.x0,
                y0: self.y0,
                x1: self.x1,
                y1: self.y1,
                width: frame.width,
                height: frame.height,
            })
        }
    }
}

/// Tightest box around the set pixels, or `None` for an empty mask.
pub fn tight_bbox(mask: &BinaryMask) -> Option<BoundingBox> {
    let mut it = mask.pixels();
    let (x, y) = it.next()?;
    let mut b = BoundingBox::new(x, y, x + 1, y + 1);
    for (x, y) in it {
        b.x0 = b.x0.min(x);
        b.y0 = b.y0.min(y);
        b.x1 = b.x1.max(x + 1);
        b.y1 = b.y1.max(y + 1);
    }
    Some(b)
}

/// Tight box around the mask; the full frame when the mask is empty.
pub fn bbox_of_mask(mask: &BinaryMask) -> BoundingBox {
    tight_bbox(mask).unwrap_or_else(|| mask.dims().full_box())
}

/// Millimetre padding converted to whole-pixel margins, rounding up.
pub fn padding_margins(padding_mm: (f64, f64), spacing: Spacing) -> (usize, usize) {
    let m = |d: f64, s: f64| (d / s).ceil().max(0.0) as usize;
    (m(padding_mm.0, spacing.x), m(padding_mm.1, spacing.y))
}

pub fn pad_bbox(bbox: BoundingBox, padding_mm: (f64, f64), spacing: Spacing, frame: Dims) -> BoundingBox {
    let (mx, my) = padding_margins(padding_mm, spacing);
    BoundingBox::new(
        bbox.x0.saturating_sub(mx),
        bbox.y0.saturating_sub(my),
        (bbox.x1 + mx).min(frame.width),
        (bbox.y1 + my).min(frame.height),
    )
}

/// Places an interval of `len` starting at `start` inside `[0, frame)`,
/// shifting before truncating.
fn fit_interval(start: i64, len: i64, frame: usize) -> (usize, usize) {
    let frame = frame as i64;
    if len >= frame {
        return (0, frame as usize);
    }
    let start = start.clamp(0, frame - len);
    (start as usize, (start + len) as usize)
}

fn grow_centered(lo: usize, hi: usize, side: usize, frame: usize) -> (usize, usize) {
    let extra = side as i64 - (hi - lo) as i64;
    fit_interval(lo as i64 - extra.div_euclid(2), side as i64, frame)
}

/// Expands the shorter side symmetrically until the box is square.
pub fn square_bbox(bbox: BoundingBox, frame: Dims) -> BoundingBox {
    let (w, h) = (bbox.width(), bbox.height());
    if w == h {
        return bbox;
    }
    let side = w.max(h);
    let (x0, x1) = grow_centered(bbox.x0, bbox.x1, side, frame.width);
    let (y0, y1) = grow_centered(bbox.y0, bbox.y1, side, frame.height);
    BoundingBox::new(x0, y0, x1, y1)
}

fn scale_axis(lo: usize, hi: usize, gamma: f64, frame: usize) -> (usize, usize) {
    let side = ((hi - lo) as f64 * gamma).round().max(1.0) as i64;
    // Twice the centre is an integer, so the start is exact up to the floor.
    let start = (lo as i64 + hi as i64 - side).div_euclid(2);
    fit_interval(start, side, frame)
}

/// Scales each side by `gamma` about the box centre.
pub fn scale_bbox(bbox: BoundingBox, gamma: f64, frame: Dims) -> Result<BoundingBox> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidPlan(format!("scale must be positive, got {gamma}")));
    }
    let (x0, x1) = scale_axis(bbox.x0, bbox.x1, gamma, frame.width);
    let (y0, y1) = scale_axis(bbox.y0, bbox.y1, gamma, frame.height);
    Ok(BoundingBox::new(x0, y0, x1, y1))
}

/// One jittered ROI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledRoi {
    pub scale: f64,
    #[serde(flatten)]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone)]
pub struct RoiSet {
    pub rois: Vec<ScaledRoi>,
    /// Union of the anchor masks (the control region).
    pub union_mask: BinaryMask,
    /// Set when no anchor produced a single pixel and the base box fell back
    /// to the whole frame.
    pub anchor_fallback: bool,
}

impl RoiSet {
    pub fn boxes(&self) -> impl Iterator<Item = BoundingBox> + '_ {
        self.rois.iter().map(|r| r.bbox)
    }

    /// Pixels covered by at least one ROI.
    pub fn domain(&self) -> BinaryMask {
        let dims = self.union_mask.dims();
        let mut m = BinaryMask::empty(dims);
        for b in self.boxes() {
            for y in b.y0..b.y1 {
                for x in b.x0..b.x1 {
                    m.set(x, y, true);
                }
            }
        }
        m
    }
}

/// Anchor union, base box, padding, optional squaring and one box per scale.
pub fn build_rois(plan: &AnatomyPlan, anchor_masks: &[BinaryMask], frame: Dims, spacing: Spacing) -> Result<RoiSet> {
    let mut union_mask = BinaryMask::empty(frame);
    for m in anchor_masks {
        union_mask = union_mask.union(m)?;
    }
    let base = tight_bbox(&union_mask);
    let anchor_fallback = base.is_none();
    let base = base.unwrap_or_else(|| frame.full_box());

    let mut padded = pad_bbox(base, plan.roi.padding_mm, spacing, frame);
    if plan.roi.square {
        padded = square_bbox(padded, frame);
    }
    let rois = plan
        .roi
        .scales
        .iter()
        .map(|&scale| {
            Ok(ScaledRoi {
                scale,
                bbox: scale_bbox(padded, scale, frame)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RoiSet {
        rois,
        union_mask,
        anchor_fallback,
    })
}
