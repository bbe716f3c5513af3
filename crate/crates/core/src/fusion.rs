//! Multi-view, multi-support fusion of segmentor outputs.
//!
//! Three layers, each with its own rule:
//! - views of one support are combined by the configured [`ViewRule`];
//! - restored crops that overlap on the canvas are averaged;
//! - supports (full frame and each jittered ROI) are combined by pixelwise max.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ScaledRoi};
use crate::grid::{Dims, ScalarGrid, Spacing};
use crate::segmentor::{Segmentor, SegmentorRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewTransform {
    Identity,
    FlipLr,
    FlipTb,
}

impl ViewTransform {
    pub const ALL: [ViewTransform; 3] = [Self::Identity, Self::FlipLr, Self::FlipTb];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::FlipLr => "flip_lr",
            Self::FlipTb => "flip_tb",
        }
    }

    /// Every view is its own inverse.
    pub fn inverse(self) -> Self {
        self
    }
}

impl fmt::Display for ViewTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ViewTransform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown view {s:?} (expected identity, flip_lr or flip_tb)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewRule {
    #[default]
    Max,
    Median,
    Mean,
}

impl std::str::FromStr for ViewRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Self::Max),
            "median" => Ok(Self::Median),
            "mean" => Ok(Self::Mean),
            _ => Err(format!("unknown view rule {s:?} (expected max, median or mean)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub view_rule: ViewRule,
    pub transforms: Vec<ViewTransform>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            view_rule: ViewRule::Max,
            transforms: ViewTransform::ALL.to_vec(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.transforms.is_empty() {
            return Err(Error::InvalidConfig("at least one view transform is required".into()));
        }
        Ok(())
    }
}

pub fn apply_view(grid: &ScalarGrid, t: ViewTransform) -> ScalarGrid {
    let Dims { width, height } = grid.dims();
    let src = grid.values();
    let values: Vec<f64> = match t {
        ViewTransform::Identity => src.to_vec(),
        ViewTransform::FlipLr => src
            .chunks_exact(width)
            .flat_map(|row| row.iter().rev().copied())
            .collect(),
        ViewTransform::FlipTb => src
            .chunks_exact(width)
            .rev()
            .flat_map(|row| row.iter().copied())
            .collect(),
    };
    ScalarGrid::new(Dims::new(width, height), grid.spacing(), values).expect("a flip preserves shape and finiteness")
}

/// Sum and count buffers for restoring crops onto the native canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct CanvasAccumulator {
    dims: Dims,
    spacing: Spacing,
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl CanvasAccumulator {
    pub fn new(dims: Dims, spacing: Spacing) -> Self {
        Self {
            dims,
            spacing,
            sum: vec![0.0; dims.len()],
            count: vec![0; dims.len()],
        }
    }

    /// Adds `cropped` at the position of `bbox`.
    pub fn restore(&mut self, cropped: &ScalarGrid, bbox: &BoundingBox) -> Result<()> {
        bbox.ensure_within(self.dims)?;
        bbox.dims().ensure_same(cropped.dims())?;
        for (row, y) in (bbox.y0..bbox.y1).enumerate() {
            for (col, x) in (bbox.x0..bbox.x1).enumerate() {
                let i = self.dims.index(x, y);
                self.sum[i] += cropped.get(col, row);
                self.count[i] += 1;
            }
        }
        Ok(())
    }

    /// Combines two partial accumulations of the same canvas.
    pub fn merge(&mut self, other: &CanvasAccumulator) -> Result<()> {
        self.dims.ensure_same(other.dims)?;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a += b;
        }
        Ok(())
    }

    /// Mean contribution per pixel; pixels no crop covered are 0.
    pub fn finalize(&self) -> ScalarGrid {
        let values = self
            .sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();
        ScalarGrid::new(self.dims, self.spacing, values).expect("finite sums of finite values")
    }
}

/// Convenience wrapper: restore a single crop into a fresh accumulator.
pub fn restore_to_canvas(
    cropped: &ScalarGrid,
    bbox: &BoundingBox,
    canvas: Dims,
    accumulator: &mut CanvasAccumulator,
) -> Result<()> {
    canvas.ensure_same(accumulator.dims)?;
    accumulator.restore(cropped, bbox)
}

fn lower_median(buf: &mut [f64]) -> f64 {
    let mid = (buf.len() - 1) / 2;
    *buf.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Pixelwise combination of same-sized maps. The median of an even count
/// is the lower of the two middle values.
pub fn fuse_views(maps: &[ScalarGrid], rule: ViewRule) -> Result<ScalarGrid> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidGrid("cannot fuse an empty list of views".into()))?;
    for m in &maps[1..] {
        first.dims().ensure_same(m.dims())?;
    }
    let n = first.dims().len();
    let mut buf = vec![0.0; maps.len()];
    let values = (0..n)
        .map(|i| {
            for (b, m) in buf.iter_mut().zip(maps) {
                *b = m.values()[i];
            }
            match rule {
                ViewRule::Max => buf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ViewRule::Mean => {
                    // Offsets from the first view keep identical views exact.
                    let base = buf[0];
                    base + buf.iter().map(|v| v - base).sum::<f64>() / buf.len() as f64
                }
                ViewRule::Median => lower_median(&mut buf),
            }
        })
        .collect();
    ScalarGrid::new(first.dims(), first.spacing(), values)
}

/// `max(full, max over ROI maps)`, pixelwise.
pub fn fuse_supports(full_frame: &ScalarGrid, roi_maps: &[ScalarGrid]) -> Result<ScalarGrid> {
    let mut values = full_frame.values().to_vec();
    for m in roi_maps {
        full_frame.dims().ensure_same(m.dims())?;
        for (v, &r) in values.iter_mut().zip(m.values()) {
            *v = v.max(r);
        }
    }
    ScalarGrid::new(full_frame.dims(), full_frame.spacing(), values)
}

/// All intermediate maps of one test-time-augmentation pass.
#[derive(Debug, Clone)]
pub struct TtaOutput {
    pub full_frame: ScalarGrid,
    pub roi_maps: Vec<ScalarGrid>,
    pub fused: ScalarGrid,
}

fn segment_view(
    segmentor: &dyn Segmentor,
    image_id: &str,
    prompt: &str,
    crop: Option<BoundingBox>,
    view: ViewTransform,
    support: &str,
) -> Result<ScalarGrid> {
    let request = SegmentorRequest {
        image_id: image_id.to_owned(),
        prompt: prompt.to_owned(),
        crop,
        transform: view,
    };
    segmentor
        .segment(&request)
        .map(|g| apply_view(&g, view.inverse()))
        .map_err(|e| e.context(format!("support {support}, view {view}")))
}

/// Segments the full frame and every ROI under every configured view,
/// restores each prediction to the canvas and fuses the lot.
pub fn run_tta(
    image_id: &str,
    prompt: &str,
    rois: &[ScaledRoi],
    segmentor: &dyn Segmentor,
    config: &FusionConfig,
) -> Result<TtaOutput> {
    config.validate()?;
    let full_views = config
        .transforms
        .iter()
        .map(|&v| segment_view(segmentor, image_id, prompt, None, v, "full"))
        .collect::<Result<Vec<_>>>()?;
    let full_frame = fuse_views(&full_views, config.view_rule)?;
    let canvas = full_frame.dims();
    let spacing = full_frame.spacing();

    let mut roi_maps = Vec::with_capacity(rois.len());
    for roi in rois {
        let label = format!("roi x{}", roi.scale);
        let mut per_view = Vec::with_capacity(config.transforms.len());
        for &v in &config.transforms {
            let q = segment_view(segmentor, image_id, prompt, Some(roi.bbox), v, &label)?;
            let mut acc = CanvasAccumulator::new(canvas, spacing);
            restore_to_canvas(&q, &roi.bbox, canvas, &mut acc)
                .map_err(|e| e.context(format!("support {label}, view {v}")))?;
            per_view.push(acc.finalize());
        }
        roi_maps.push(fuse_views(&per_view, config.view_rule)?);
    }
    let fused = fuse_supports(&full_frame, &roi_maps)?;
    Ok(TtaOutput {
        full_frame,
        roi_maps,
        fused,
    })
}
