//! Analytic synthetic scenes: Gaussian probability blobs for organs, lesions
//! and clutter, plus a matching intensity image.
//!
//! Clutter is placed entirely inside the organ region and receives organ
//! intensities, so a two-sample test of clutter against the organ is an
//! exact null.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dims, ScalarGrid, Spacing};

/// Probability level that defines a blob's ground-truth footprint.
pub const CORE_LEVEL: f64 = 0.5;
/// Clutter and lesions keep this much clearance beyond the level-0.3 disk.
const PLACEMENT_LEVEL: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: (f64, f64),
    /// Gaussian standard deviation in pixels.
    pub radius: f64,
    pub peak: f64,
}

impl Blob {
    #[inline]
    pub fn value_at(&self, x: usize, y: usize) -> f64 {
        let dx = x as f64 - self.center.0;
        let dy = y as f64 - self.center.1;
        self.peak * (-(dx * dx + dy * dy) / (2.0 * self.radius * self.radius)).exp()
    }

    /// Distance from the centre at which the blob falls to `level`
    /// (zero when the peak is below it).
    pub fn reach(&self, level: f64) -> f64 {
        if self.peak <= level {
            0.0
        } else {
            self.radius * (2.0 * (self.peak / level).ln()).sqrt()
        }
    }

    /// Pixels where the blob is at least [`CORE_LEVEL`].
    pub fn core_mask(&self, dims: Dims) -> BinaryMask {
        let mut m = BinaryMask::empty(dims);
        for y in 0..dims.height {
            for x in 0..dims.width {
                if self.value_at(x, y) >= CORE_LEVEL {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.peak > 0.0 && self.peak <= 1.0) {
            return Err(Error::InvalidBench(format!(
                "{what}: peak {} outside (0, 1]",
                self.peak
            )));
        }
        if !(self.radius >= 1.0 && self.radius.is_finite()) {
            return Err(Error::InvalidBench(format!(
                "{what}: radius {} below 1 px",
                self.radius
            )));
        }
        if !(self.center.0.is_finite() && self.center.1.is_finite()) {
            return Err(Error::InvalidBench(format!("{what}: non-finite centre")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterSpec {
    pub count: usize,
    pub radius_range: (f64, f64),
    pub peak_range: (f64, f64),
    pub seed: u64,
}

impl Default for ClutterSpec {
    fn default() -> Self {
        Self {
            count: 0,
            radius_range: (5.0, 7.0),
            peak_range: (0.75, 0.95),
            seed: 0,
        }
    }
}

/// Intensity image model: organ and background plateaus with iid Gaussian
/// noise; lesion cores are shifted by `lesion_shift_sd` noise SDs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    pub background_mean: f64,
    pub organ_mean: f64,
    pub noise_sd: f64,
    pub lesion_shift_sd: f64,
    /// Organ region = organ probability field at or above this level.
    pub organ_threshold: f64,
    pub seed: u64,
}

impl Default for IntensityModel {
    fn default() -> Self {
        Self {
            background_mean: 0.2,
            organ_mean: 0.5,
            noise_sd: 0.08,
            lesion_shift_sd: 2.0,
            organ_threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    pub organ_blobs: Vec<Blob>,
    pub lesion_blobs: Vec<Blob>,
    pub clutter: ClutterSpec,
    pub noise_floor: f64,
    pub intensity: IntensityModel,
}

impl SyntheticSceneSpec {
    pub fn empty(dims: Dims) -> Self {
        Self {
            dims,
            spacing: Spacing::default(),
            organ_blobs: Vec::new(),
            lesion_blobs: Vec::new(),
            clutter: ClutterSpec::default(),
            noise_floor: 0.0,
            intensity: IntensityModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidBench("scene frame is empty".into()));
        }
        self.spacing.validate()?;
        for b in &self.organ_blobs {
            b.validate("organ blob")?;
        }
        for b in &self.lesion_blobs {
            b.validate("lesion blob")?;
        }
        let c = &self.clutter;
        let (r0, r1) = c.radius_range;
        let (p0, p1) = c.peak_range;
        if !(r0 >= 1.0 && r0 <= r1 && r1.is_finite()) {
            return Err(Error::InvalidBench(format!("clutter radius range ({r0}, {r1})")));
        }
        if !(p0 > 0.0 && p0 <= p1 && p1 <= 1.0) {
            return Err(Error::InvalidBench(format!("clutter peak range ({p0}, {p1})")));
        }
        if !(0.0..=1.0).contains(&self.noise_floor) {
            return Err(Error::InvalidBench(format!("noise floor {}", self.noise_floor)));
        }
        if !(self.intensity.noise_sd >= 0.0 && self.intensity.noise_sd.is_finite()) {
            return Err(Error::InvalidBench("intensity noise_sd must be >= 0".into()));
        }
        Ok(())
    }

    fn organ_field(&self, x: usize, y: usize) -> f64 {
        self.organ_blobs.iter().map(|b| b.value_at(x, y)).fold(0.0, f64::max)
    }

    /// Organ region used for intensities (and recovered by anchor masks at
    /// the same threshold).
    pub fn organ_region(&self) -> BinaryMask {
        let t = self.intensity.organ_threshold;
        let mut m = BinaryMask::empty(self.dims);
        for y in 0..self.dims.height {
            for x in 0..self.dims.width {
                if !self.organ_blobs.is_empty() && self.organ_field(x, y) >= t {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Ground-truth lesion footprint: union of lesion cores.
    pub fn lesion_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::empty(self.dims);
        for b in &self.lesion_blobs {
            for (x, y) in b.core_mask(self.dims).pixels().collect::<Vec<_>>() {
                m.set(x, y, true);
            }
        }
        m
    }

    /// Deterministic clutter placement from the clutter seed. Blobs that
    /// cannot be placed inside the organ away from lesions are dropped.
    pub fn clutter_blobs(&self) -> Vec<Blob> {
        let c = &self.clutter;
        if c.count == 0 {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let organ = self.organ_region();
        let has_organ = !self.organ_blobs.is_empty();
        let mut placed: Vec<Blob> = Vec::new();
        let (w, h) = (self.dims.width as f64, self.dims.height as f64);

        for _ in 0..c.count {
            let radius = sample_range(&mut rng, c.radius_range);
            let peak = sample_range(&mut rng, c.peak_range);
            for _attempt in 0..400 {
                let cx = rng.random_range(0.0..w);
                let cy = rng.random_range(0.0..h);
                let blob = Blob {
                    center: (cx.round(), cy.round()),
                    radius,
                    peak,
                };
                let reach = blob.reach(PLACEMENT_LEVEL).max(radius) + 1.0;
                let clear = |other: &Blob| {
                    let d =
                        ((other.center.0 - blob.center.0).powi(2) + (other.center.1 - blob.center.1).powi(2)).sqrt();
                    d > reach + other.reach(PLACEMENT_LEVEL).max(other.radius) + 1.0
                };
                if !self.lesion_blobs.iter().all(clear) || !placed.iter().all(clear) {
                    continue;
                }
                if disk_inside(&organ, blob.center, reach, has_organ) {
                    placed.push(blob);
                    break;
                }
            }
        }
        placed
    }
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Whether the disk lies in the frame and, when `require_region`, inside
/// `region`.
fn disk_inside(region: &BinaryMask, center: (f64, f64), reach: f64, require_region: bool) -> bool {
    let d = region.dims();
    let (cx, cy) = center;
    if cx - reach < 0.0 || cy - reach < 0.0 || cx + reach > (d.width - 1) as f64 || cy + reach > (d.height - 1) as f64 {
        return false;
    }
    if !require_region {
        return true;
    }
    let y0 = (cy - reach).floor().max(0.0) as usize;
    let y1 = ((cy + reach).ceil() as usize).min(d.height - 1);
    let x0 = (cx - reach).floor().max(0.0) as usize;
    let x1 = ((cx + reach).ceil() as usize).min(d.width - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dd = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if dd <= reach * reach && !region.get(x, y) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Organ,
    Tumor,
}

/// Renders the probability map seen by an organ or tumor prompt.
///
/// Organ prompts see the organ blobs; tumor prompts see lesions and clutter.
/// Both sit on the constant noise floor, combined by pixelwise max and
/// clipped to `[0, 1]`.
pub fn render_synthetic(spec: &SyntheticSceneSpec, kind: PromptKind) -> Result<ScalarGrid> {
    spec.validate()?;
    let blobs: Vec<Blob> = match kind {
        PromptKind::Organ => spec.organ_blobs.clone(),
        PromptKind::Tumor => {
            let mut b = spec.lesion_blobs.clone();
            b.extend(spec.clutter_blobs());
            b
        }
    };
    ScalarGrid::from_fn(spec.dims, spec.spacing, |x, y| {
        blobs
            .iter()
            .map(|b| b.value_at(x, y))
            .fold(spec.noise_floor, f64::max)
            .clamp(0.0, 1.0)
    })
}

/// Intensity image for the scene.
pub fn render_intensity(spec: &SyntheticSceneSpec) -> Result<ScalarGrid> {
    spec.validate()?;
    let m = &spec.intensity;
    let organ = spec.organ_region();
    let lesion = spec.lesion_mask();
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    ScalarGrid::from_fn(spec.dims, spec.spacing, |x, y| {
        let mut mean = if organ.get(x, y) {
            m.organ_mean
        } else {
            m.background_mean
        };
        if lesion.get(x, y) {
            mean = m.organ_mean + m.lesion_shift_sd * m.noise_sd;
        }
        let z: f64 = rng.sample(StandardNormal);
        mean + m.noise_sd * z
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SyntheticSceneSpec {
        let mut s = SyntheticSceneSpec::empty(Dims::new(64, 64));
        s.noise_floor = 0.05;
        s
    }

    #[test]
    fn empty_spec_is_floor() {
        let s = scene();
        for kind in [PromptKind::Organ, PromptKind::Tumor] {
            let g = render_synthetic(&s, kind).unwrap();
            assert!(g.values().iter().all(|&v| v == 0.05));
        }
    }

    #[test]
    fn single_blob_peak() {
        let mut s = scene();
        s.lesion_blobs.push(Blob {
            center: (32.0, 32.0),
            radius: 5.0,
            peak: 0.9,
        });
        let g = render_synthetic(&s, PromptKind::Tumor).unwrap();
        assert!((g.max_value() - 0.9).abs() < 1e-6);
        assert!((g.get(32, 32) - 0.9).abs() < 1e-6);
        // Organ prompt does not see the lesion.
        let o = render_synthetic(&s, PromptKind::Organ).unwrap();
        assert_eq!(o.max_value(), 0.05);
    }

    #[test]
    fn overlapping_blobs_take_pixelwise_max() {
        let a = Blob {
            center: (20.0, 30.0),
            radius: 6.0,
            peak: 0.8,
        };
        let b = Blob {
            center: (26.0, 30.0),
            radius: 4.0,
            peak: 0.95,
        };
        let mut s = scene();
        s.noise_floor = 0.0;
        s.lesion_blobs = vec![a, b];
        let g = render_synthetic(&s, PromptKind::Tumor).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(g.get(x, y), a.value_at(x, y).max(b.value_at(x, y)));
            }
        }
    }

    #[test]
    fn clutter_disabled_leaves_lesions_only() {
        let mut s = scene();
        s.organ_blobs.push(Blob {
            center: (32.0, 32.0),
            radius: 20.0,
            peak: 0.95,
        });
        s.lesion_blobs.push(Blob {
            center: (30.0, 30.0),
            radius: 4.0,
            peak: 0.9,
        });
        s.clutter.count = 0;
        assert!(s.clutter_blobs().is_empty());
        let g = render_synthetic(&s, PromptKind::Tumor).unwrap();
        let les = s.lesion_blobs[0];
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(g.get(x, y), les.value_at(x, y).max(0.05));
            }
        }
    }

    #[test]
    fn clutter_lands_inside_organ_and_is_reproducible() {
        let mut s = SyntheticSceneSpec::empty(Dims::new(128, 128));
        s.organ_blobs.push(Blob {
            center: (64.0, 64.0),
            radius: 24.0,
            peak: 0.95,
        });
        s.clutter = ClutterSpec {
            count: 2,
            seed: 9,
            ..ClutterSpec::default()
        };
        let a = s.clutter_blobs();
        assert_eq!(a, s.clutter_blobs());
        assert_eq!(a.len(), 2);
        let organ = s.organ_region();
        let tumor = render_synthetic(&s, PromptKind::Tumor).unwrap();
        for y in 0..128 {
            for x in 0..128 {
                if tumor.get(x, y) >= PLACEMENT_LEVEL {
                    assert!(organ.get(x, y), "clutter pixel ({x},{y}) outside organ");
                }
            }
        }
    }

    #[test]
    fn intensity_reproducible_and_shifted() {
        let mut s = SyntheticSceneSpec::empty(Dims::new(96, 96));
        s.organ_blobs.push(Blob {
            center: (48.0, 48.0),
            radius: 20.0,
            peak: 0.95,
        });
        s.lesion_blobs.push(Blob {
            center: (48.0, 48.0),
            radius: 6.0,
            peak: 0.9,
        });
        s.intensity.seed = 5;
        let a = render_intensity(&s).unwrap();
        assert_eq!(a, render_intensity(&s).unwrap());
        let les = s.lesion_mask();
        let organ = s.organ_region().difference(&les).unwrap();
        let mean = |m: &BinaryMask| m.pixels().map(|(x, y)| a.get(x, y)).sum::<f64>() / m.count() as f64;
        let shift = (mean(&les) - mean(&organ)) / s.intensity.noise_sd;
        assert!((shift - 2.0).abs() < 0.5, "shift {shift}");
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = scene();
        s.lesion_blobs.push(Blob {
            center: (1.0, 1.0),
            radius: 0.5,
            peak: 0.9,
        });
        assert!(render_synthetic(&s, PromptKind::Tumor).is_err());
        let mut s = scene();
        s.organ_blobs.push(Blob {
            center: (1.0, 1.0),
            radius: 3.0,
            peak: 1.5,
        });
        assert!(s.validate().is_err());
    }
}
