//! Row-major 2D scalar grids and binary masks.
//!
//! Pixels are addressed as `(x, y) = (column, row)` and stored at index
//! `y * width + x`. Everything in the crate shares this layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Frame size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub const fn len(&self) -> usize {
        self.width * self.height
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn full_box(&self) -> BoundingBox {
        BoundingBox::new(0, 0, self.width, self.height)
    }

    fn as_pair(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub(crate) fn ensure_same(&self, other: Dims) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.as_pair(),
                actual: other.as_pair(),
            })
        }
    }
}

/// Physical pixel size in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub x: f64,
    pub y: f64,
}

impl Spacing {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        let s = Self { x, y };
        s.validate()?;
        Ok(s)
    }

    pub const fn isotropic_unit() -> Self {
        Self { x: 1.0, y: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_finite() && self.y.is_finite() && self.x > 0.0 && self.y > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidGrid(format!(
                "spacing must be positive and finite, got ({}, {})",
                self.x, self.y
            )))
        }
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Self::isotropic_unit()
    }
}

/// A 2D field of finite reals with physical spacing. Holds both intensity
/// images and probability maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    dims: Dims,
    spacing: Spacing,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: Dims, spacing: Spacing, values: Vec<f64>) -> Result<Self> {
        if dims.width == 0 || dims.height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be at least 1x1, got {}x{}",
                dims.width, dims.height
            )));
        }
        if values.len() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {}x{}, got {}",
                dims.len(),
                dims.width,
                dims.height,
                values.len()
            )));
        }
        spacing.validate()?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "non-finite value at ({}, {})",
                i % dims.width,
                i / dims.width
            )));
        }
        Ok(Self { dims, spacing, values })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f64) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.len()])
    }

    /// Builds a grid from a per-pixel function of `(x, y)`.
    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.len());
        for y in 0..dims.height {
            for x in 0..dims.width {
                values.push(f(x, y));
            }
        }
        Self::new(dims, spacing, values)
    }

    /// Same as [`ScalarGrid::new`] but additionally requires every value in `[0, 1]`.
    pub fn probability(dims: Dims, spacing: Spacing, values: Vec<f64>) -> Result<Self> {
        let g = Self::new(dims, spacing, values)?;
        g.validate_probability()?;
        Ok(g)
    }

    pub fn validate_probability(&self) -> Result<()> {
        match self.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            None => Ok(()),
            Some(i) => Err(Error::InvalidGrid(format!(
                "probability {} at ({}, {}) outside [0, 1]",
                self.values[i],
                i % self.dims.width,
                i / self.dims.width
            ))),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.dims.index(x, y)]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copies the sub-grid covered by `bbox`.
    pub fn crop(&self, bbox: &BoundingBox) -> Result<Self> {
        bbox.ensure_within(self.dims)?;
        let dims = bbox.dims();
        let mut values = Vec::with_capacity(dims.len());
        for y in bbox.y0..bbox.y1 {
            let row = self.dims.index(bbox.x0, y);
            values.extend_from_slice(&self.values[row..row + dims.width]);
        }
        Ok(Self {
            dims,
            spacing: self.spacing,
            values,
        })
    }

    /// Elementwise transform; the result is re-validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Affine rescale of the value range to `[0, 1]`. A constant grid maps to zeros.
    pub fn min_max_normalized(&self) -> Self {
        let lo = self.min_value();
        let hi = self.max_value();
        let span = hi - lo;
        let values = if span > 0.0 {
            self.values.iter().map(|v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.values.len()]
        };
        Self {
            dims: self.dims,
            spacing: self.spacing,
            values,
        }
    }

    /// Zeroes every pixel outside `mask`.
    pub fn masked(&self, mask: &BinaryMask) -> Result<Self> {
        self.dims.ensure_same(mask.dims())?;
        let values = self
            .values
            .iter()
            .zip(mask.bits())
            .map(|(&v, &b)| if b { v } else { 0.0 })
            .collect();
        Ok(Self {
            dims: self.dims,
            spacing: self.spacing,
            values,
        })
    }
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} mask bits for {}x{}, got {}",
                dims.len(),
                dims.width,
                dims.height,
                bits.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            bits: vec![false; dims.len()],
        }
    }

    pub fn full(dims: Dims) -> Self {
        Self {
            dims,
            bits: vec![true; dims.len()],
        }
    }

    pub fn from_box(dims: Dims, bbox: &BoundingBox) -> Result<Self> {
        bbox.ensure_within(dims)?;
        let mut m = Self::empty(dims);
        for y in bbox.y0..bbox.y1 {
            for x in bbox.x0..bbox.x1 {
                m.set(x, y, true);
            }
        }
        Ok(m)
    }

    pub fn from_pixels(dims: Dims, pixels: &[(usize, usize)]) -> Self {
        let mut m = Self::empty(dims);
        for &(x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[self.dims.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let i = self.dims.index(x, y);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    /// `true` when every pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims == other.dims && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Set pixels as `(x, y)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.dims.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// 0/1 valued grid, the on-disk form of a mask.
    pub fn to_grid(&self, spacing: Spacing) -> ScalarGrid {
        ScalarGrid {
            dims: self.dims,
            spacing,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Inverse of [`BinaryMask::to_grid`]; values other than 0 and 1 are rejected.
    pub fn from_grid(grid: &ScalarGrid) -> Result<Self> {
        let mut bits = Vec::with_capacity(grid.values.len());
        for (i, &v) in grid.values.iter().enumerate() {
            if v == 1.0 {
                bits.push(true);
            } else if v == 0.0 {
                bits.push(false);
            } else {
                return Err(Error::InvalidGrid(format!(
                    "mask value {v} at index {i} is neither 0 nor 1"
                )));
            }
        }
        Ok(Self { dims: grid.dims, bits })
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.dims.ensure_same(other.dims)?;
        Ok(Self {
            dims: self.dims,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::ThresholdOutOfRange {
            name: "tau",
            value: tau,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// `1{grid >= tau}` with the inclusive comparison.
pub fn binarize(grid: &ScalarGrid, tau: f64) -> Result<BinaryMask> {
    check_tau(tau)?;
    Ok(BinaryMask {
        dims: grid.dims,
        bits: grid.values.iter().map(|&v| v >= tau).collect(),
    })
}

/// Fraction of `domain` pixels whose value is at least `tau`.
///
/// An empty domain is an error; callers fall back to the full frame.
pub fn positive_ratio(grid: &ScalarGrid, domain: &BinaryMask, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    grid.dims.ensure_same(domain.dims)?;
    let total = domain.count();
    if total == 0 {
        return Err(Error::EmptyDomain("positive ratio over an empty ROI"));
    }
    let hits = grid
        .values
        .iter()
        .zip(&domain.bits)
        .filter(|&(&v, &d)| d && v >= tau)
        .count();
    Ok(hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, v: Vec<f64>) -> ScalarGrid {
        ScalarGrid::new(Dims::new(w, h), Spacing::default(), v).unwrap()
    }

    #[test]
    fn binarize_uniform_below_threshold() {
        let g = ScalarGrid::filled(Dims::new(4, 3), Spacing::default(), 0.3).unwrap();
        assert!(binarize(&g, 0.4).unwrap().is_empty());
    }

    #[test]
    fn binarize_is_inclusive() {
        let g = grid(1, 1, vec![0.4]);
        assert!(binarize(&g, 0.4).unwrap().get(0, 0));
    }

    #[test]
    fn binarize_two_by_two() {
        let g = grid(2, 2, vec![0.1, 0.5, 0.4, 0.39]);
        let m = binarize(&g, 0.4).unwrap();
        assert_eq!(m.bits(), &[false, true, true, false]);
    }

    #[test]
    fn binarize_rejects_bad_tau() {
        let g = grid(1, 1, vec![0.5]);
        assert!(binarize(&g, 1.5).is_err());
        assert!(binarize(&g, -0.1).is_err());
        assert!(binarize(&g, f64::NAN).is_err());
    }

    #[test]
    fn grid_rejects_non_finite_and_bad_shape() {
        let d = Dims::new(2, 1);
        assert!(ScalarGrid::new(d, Spacing::default(), vec![0.0, f64::NAN]).is_err());
        assert!(ScalarGrid::new(d, Spacing::default(), vec![0.0]).is_err());
        assert!(ScalarGrid::new(Dims::new(0, 3), Spacing::default(), vec![]).is_err());
        assert!(Spacing::new(0.0, 1.0).is_err());
        assert!(ScalarGrid::probability(d, Spacing::default(), vec![0.0, 1.2]).is_err());
    }

    #[test]
    fn positive_ratio_cases() {
        let d = Dims::new(5, 2);
        let full = BinaryMask::full(d);
        let hi = ScalarGrid::filled(d, Spacing::default(), 0.9).unwrap();
        let lo = ScalarGrid::filled(d, Spacing::default(), 0.0).unwrap();
        assert_eq!(positive_ratio(&hi, &full, 0.4).unwrap(), 1.0);
        assert_eq!(positive_ratio(&lo, &full, 0.4).unwrap(), 0.0);

        let mut v = vec![0.1; 10];
        v[3] = 0.5;
        v[7] = 0.4;
        let g = grid(5, 2, v);
        assert_eq!(positive_ratio(&g, &full, 0.4).unwrap(), 0.2);
    }

    #[test]
    fn positive_ratio_empty_domain_errors() {
        let d = Dims::new(3, 3);
        let g = ScalarGrid::filled(d, Spacing::default(), 0.9).unwrap();
        assert!(matches!(
            positive_ratio(&g, &BinaryMask::empty(d), 0.4),
            Err(Error::EmptyDomain(_))
        ));
    }

    #[test]
    fn crop_extracts_sub_grid() {
        let g = ScalarGrid::from_fn(Dims::new(4, 3), Spacing::default(), |x, y| (10 * y + x) as f64).unwrap();
        let c = g.crop(&BoundingBox::new(1, 1, 3, 3)).unwrap();
        assert_eq!(c.values(), &[11.0, 12.0, 21.0, 22.0]);
        assert!(g.crop(&BoundingBox::new(2, 0, 5, 1)).is_err());
    }

    fn prob_grid() -> impl Strategy<Value = ScalarGrid> {
        (1usize..8, 1usize..8)
            .prop_flat_map(|(w, h)| proptest::collection::vec(0.0f64..=1.0, w * h).prop_map(move |v| grid(w, h, v)))
    }

    proptest! {
        #[test]
        fn binarize_monotone_in_tau(g in prob_grid(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m_lo = binarize(&g, lo).unwrap();
            let m_hi = binarize(&g, hi).unwrap();
            prop_assert!(m_hi.is_subset_of(&m_lo));
        }

        #[test]
        fn binarize_extremes(g in prob_grid()) {
            prop_assert_eq!(binarize(&g, 0.0).unwrap().count(), g.dims().len());
            let above = g.max_value() + 1e-9;
            if above <= 1.0 {
                prop_assert!(binarize(&g, above).unwrap().is_empty());
            }
        }

        #[test]
        fn positive_ratio_matches_mask_count(g in prob_grid(), tau in 0.0f64..=1.0, seed in any::<u64>()) {
            let d = g.dims();
            let bits: Vec<bool> = (0..d.len()).map(|i| (seed >> (i % 64)) & 1 == 1 || i == 0).collect();
            let dom = BinaryMask::new(d, bits).unwrap();
            let inter = binarize(&g, tau).unwrap().intersection(&dom).unwrap();
            let r = positive_ratio(&g, &dom, tau).unwrap();
            prop_assert_eq!(r, inter.count() as f64 / dom.count() as f64);
        }
    }
}
