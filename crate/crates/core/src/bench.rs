//! Synthetic benchmark: scenes with known lesions, the full pipeline, and
//! detection statistics.
//!
//! ```toml
//! n_cases = 200
//! fraction_positive = 0.5
//! effect_size = 2.0
//! clutter_rate = 2
//! seed = 7
//!
//! [scene]
//! width = 128
//! height = 128
//! lesion_radius = 6.0
//! ```
//!
//! Cases `0..round(n_cases * fraction_positive)` carry one lesion; the rest
//! carry `clutter_rate` null blobs whose intensities follow the organ.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateRegion;
use crate::config::GateConfig;
use crate::error::{Error, Result};
use crate::gating::GateLevel;
use crate::grid::{BinaryMask, Dims, Spacing};
use crate::manifest::{Manifest, ManifestEntry};
use crate::metrics::{dice, slice_metrics, MetricsReport, SliceMetrics};
use crate::pipeline::{process_case, CandidateStatus};
use crate::plan::AnatomyPlan;
use crate::seed::derive_seed;
use crate::segmentor::SyntheticSegmentor;
use crate::sgrid;
use crate::synthetic::{
    render_intensity, render_synthetic, Blob, ClutterSpec, IntensityModel, PromptKind, SyntheticSceneSpec,
};

pub const ORGAN_PROMPT: &str = "organ";
pub const TUMOR_PROMPT: &str = "organ tumor";
/// A kept candidate counts as a detection when its IoU with a planted
/// lesion reaches this.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneTemplate {
    pub width: usize,
    pub height: usize,
    pub spacing_mm: f64,
    pub organ_sigma: f64,
    pub organ_peak: f64,
    /// Maximum offset of the organ centre from the frame centre, in pixels.
    pub organ_jitter: f64,
    pub lesion_radius: f64,
    pub lesion_peak: f64,
    pub clutter_radius: (f64, f64),
    pub clutter_peak: (f64, f64),
    pub noise_floor: f64,
    pub background_mean: f64,
    pub organ_mean: f64,
    pub noise_sd: f64,
}

impl Default for SceneTemplate {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            spacing_mm: 1.0,
            organ_sigma: 22.0,
            organ_peak: 0.95,
            organ_jitter: 8.0,
            lesion_radius: 6.0,
            lesion_peak: 0.9,
            clutter_radius: (5.0, 7.0),
            clutter_peak: (0.75, 0.95),
            noise_floor: 0.05,
            background_mean: 0.2,
            organ_mean: 0.5,
            noise_sd: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub n_cases: usize,
    pub fraction_positive: f64,
    /// Lesion intensity shift in units of the pixel noise SD.
    pub effect_size: f64,
    /// Null blobs per negative case.
    pub clutter_rate: usize,
    pub seed: u64,
    pub scene: SceneTemplate,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            n_cases: 200,
            fraction_positive: 0.5,
            effect_size: 2.0,
            clutter_rate: 2,
            seed: 0,
            scene: SceneTemplate::default(),
        }
    }
}

fn bad(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidBench(format!("{field}: {msg}"))
}

impl BenchSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: BenchSpec = toml::from_str(text).map_err(|e| Error::InvalidBench(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("bench spec serializes")
    }

    pub fn n_positive(&self) -> usize {
        (self.n_cases as f64 * self.fraction_positive).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction_positive) {
            return Err(bad(
                "fraction_positive",
                format!("{} outside [0, 1]", self.fraction_positive),
            ));
        }
        if !(self.effect_size.is_finite() && self.effect_size >= 0.0) {
            return Err(bad("effect_size", format!("{} must be >= 0", self.effect_size)));
        }
        let t = &self.scene;
        if t.width < 8 || t.height < 8 {
            return Err(bad("scene.width/height", "frame must be at least 8x8"));
        }
        if !(t.spacing_mm.is_finite() && t.spacing_mm > 0.0) {
            return Err(bad("scene.spacing_mm", "must be positive"));
        }
        for (name, v) in [("scene.organ_peak", t.organ_peak), ("scene.lesion_peak", t.lesion_peak)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(bad(name, format!("{v} outside (0, 1]")));
            }
        }
        if t.organ_peak <= 0.5 {
            return Err(bad("scene.organ_peak", "must exceed the organ threshold 0.5"));
        }
        for (name, v) in [
            ("scene.organ_sigma", t.organ_sigma),
            ("scene.lesion_radius", t.lesion_radius),
        ] {
            if !(v.is_finite() && v >= 1.0) {
                return Err(bad(name, format!("{v} below 1 px")));
            }
        }
        if !(t.organ_jitter.is_finite() && t.organ_jitter >= 0.0) {
            return Err(bad("scene.organ_jitter", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&t.noise_floor) {
            return Err(bad("scene.noise_floor", format!("{} outside [0, 1]", t.noise_floor)));
        }
        if !(t.noise_sd.is_finite() && t.noise_sd >= 0.0) {
            return Err(bad("scene.noise_sd", "must be >= 0"));
        }
        let (r0, r1) = t.clutter_radius;
        if !(r0 >= 1.0 && r0 <= r1 && r1.is_finite()) {
            return Err(bad(
                "scene.clutter_radius",
                format!("({r0}, {r1}) is not an increasing range >= 1"),
            ));
        }
        let (p0, p1) = t.clutter_peak;
        if !(p0 > 0.0 && p0 <= p1 && p1 <= 1.0) {
            return Err(bad(
                "scene.clutter_peak",
                format!("({p0}, {p1}) is not a range in (0, 1]"),
            ));
        }
        // Lesions must fit inside the organ region.
        let organ_r = t.organ_sigma * (2.0 * (t.organ_peak / 0.5).ln()).sqrt();
        if lesion_reach(t) >= organ_r {
            return Err(bad(
                "scene.lesion_radius",
                "lesion does not fit inside the organ region",
            ));
        }
        Ok(())
    }

    pub fn image_id(i: usize) -> String {
        format!("case_{i:04}")
    }

    /// The scene of case `i`; deterministic in `(seed, i)`.
    pub fn case_scene(&self, i: usize) -> SyntheticSceneSpec {
        let t = &self.scene;
        let id = Self::image_id(i);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[&id, "layout"]));
        let dims = Dims::new(t.width, t.height);
        let jitter = |rng: &mut ChaCha8Rng| {
            if t.organ_jitter > 0.0 {
                rng.random_range(-t.organ_jitter..=t.organ_jitter)
            } else {
                0.0
            }
        };
        let organ_center = (
            (t.width as f64 / 2.0 + jitter(&mut rng)).round(),
            (t.height as f64 / 2.0 + jitter(&mut rng)).round(),
        );
        let mut spec = SyntheticSceneSpec::empty(dims);
        spec.spacing = Spacing::new(t.spacing_mm, t.spacing_mm).expect("validated spacing");
        spec.noise_floor = t.noise_floor;
        spec.organ_blobs.push(Blob {
            center: organ_center,
            radius: t.organ_sigma,
            peak: t.organ_peak,
        });
        let positive = i < self.n_positive();
        if positive {
            let organ_r = t.organ_sigma * (2.0 * (t.organ_peak / 0.5).ln()).sqrt();
            let room = (organ_r - lesion_reach(t) - 1.0).max(0.0);
            let (dx, dy) = loop {
                let dx = rng.random_range(-1.0..=1.0);
                let dy = rng.random_range(-1.0..=1.0);
                if dx * dx + dy * dy <= 1.0 {
                    break (dx * room, dy * room);
                }
            };
            spec.lesion_blobs.push(Blob {
                center: ((organ_center.0 + dx).round(), (organ_center.1 + dy).round()),
                radius: t.lesion_radius,
                peak: t.lesion_peak,
            });
        }
        spec.clutter = ClutterSpec {
            count: if positive { 0 } else { self.clutter_rate },
            radius_range: t.clutter_radius,
            peak_range: t.clutter_peak,
            seed: derive_seed(self.seed, &[&id, "clutter"]),
        };
        spec.intensity = IntensityModel {
            background_mean: t.background_mean,
            organ_mean: t.organ_mean,
            noise_sd: t.noise_sd,
            lesion_shift_sd: self.effect_size,
            organ_threshold: 0.5,
            seed: derive_seed(self.seed, &[&id, "intensity"]),
        };
        spec
    }

    pub fn case_plan(&self, cfg: &GateConfig) -> AnatomyPlan {
        AnatomyPlan {
            anchors: vec![ORGAN_PROMPT.to_owned()],
            roi: cfg.roi_rules(),
            rationale: "lesions of this organ lie within its outline".to_owned(),
            tumor_prompt: TUMOR_PROMPT.to_owned(),
            anchor_threshold: 0.5,
        }
    }
}

/// Radius beyond which a lesion's map falls below the placement level.
fn lesion_reach(t: &SceneTemplate) -> f64 {
    let b = Blob {
        center: (0.0, 0.0),
        radius: t.lesion_radius,
        peak: t.lesion_peak,
    };
    b.reach(0.3).max(t.lesion_radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTrail {
    pub image_id: String,
    pub positive: bool,
    pub predicted_positive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_gate: Option<GateLevel>,
    pub candidates: usize,
    /// Candidates that match no planted lesion.
    pub null_candidates: usize,
    pub bh_kept: usize,
    pub null_bh_kept: usize,
    pub kept: usize,
    pub kept_true: usize,
    pub planted: usize,
    pub recovered: usize,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub n_cases: usize,
    pub n_positive: usize,
    /// False kept / all kept in the final output (0 when nothing is kept).
    pub empirical_fdr: f64,
    /// Planted lesions recovered by a kept candidate / planted.
    pub power: f64,
    pub slice_sensitivity: f64,
    pub slice_specificity: f64,
    /// Mean false-discovery proportion of the BH stage over cases with at
    /// least one tested candidate.
    pub screen_fdr: f64,
    pub screen_families: usize,
    pub null_tests: usize,
    pub null_bh_kept: usize,
    /// `null_bh_kept / null_tests`.
    pub null_kept_fraction: f64,
    pub alpha: f64,
    /// `alpha + 2 sqrt(alpha (1 - alpha) / screen_families)`.
    pub screen_fdr_bound: f64,
    pub metrics: Option<MetricsReport>,
    pub cases: Vec<CaseTrail>,
}

impl BenchResult {
    pub fn screen_fdr_within_bound(&self) -> bool {
        self.screen_fdr <= self.screen_fdr_bound
    }
}

fn iou(pixels: &[(usize, usize)], lesion: &BinaryMask) -> f64 {
    let inter = pixels.iter().filter(|&&(x, y)| lesion.get(x, y)).count();
    let union = pixels.len() + lesion.count() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn matches_any(c: &CandidateRegion, lesions: &[BinaryMask]) -> bool {
    lesions.iter().any(|l| iou(&c.pixels, l) >= MATCH_IOU)
}

fn run_case(spec: &BenchSpec, cfg: &GateConfig, i: usize) -> Result<(CaseTrail, SliceMetrics)> {
    let id = BenchSpec::image_id(i);
    let scene = spec.case_scene(i);
    let mut seg = SyntheticSegmentor::new();
    seg.register(&id, &scene, &[ORGAN_PROMPT.to_owned()], TUMOR_PROMPT)?;
    let intensity = render_intensity(&scene)?;
    let plan = spec.case_plan(cfg);
    let r = process_case(&id, &intensity, &plan, &seg, cfg).map_err(|e| e.context(id.clone()))?;

    let lesions: Vec<BinaryMask> = scene.lesion_blobs.iter().map(|b| b.core_mask(scene.dims)).collect();
    let gt = scene.lesion_mask();
    let mut trail = CaseTrail {
        image_id: id.clone(),
        positive: !lesions.is_empty(),
        predicted_positive: r.report.predicted_positive,
        failed_gate: r.report.failed_gate,
        candidates: r.report.candidates.len(),
        null_candidates: 0,
        bh_kept: 0,
        null_bh_kept: 0,
        kept: 0,
        kept_true: 0,
        planted: lesions.len(),
        recovered: 0,
        dice: dice(&r.mask, &gt)?,
    };
    let mut kept_regions = Vec::new();
    for c in &r.report.candidates {
        let real = matches_any(&c.region, &lesions);
        trail.null_candidates += usize::from(!real);
        if c.bh_kept {
            trail.bh_kept += 1;
            trail.null_bh_kept += usize::from(!real);
        }
        if c.status == CandidateStatus::Kept {
            trail.kept += 1;
            trail.kept_true += usize::from(real);
            kept_regions.push(&c.region);
        }
    }
    trail.recovered = lesions
        .iter()
        .filter(|l| kept_regions.iter().any(|c| iou(&c.pixels, l) >= MATCH_IOU))
        .count();
    let soft = r.p_final.masked(&r.mask)?;
    let m = slice_metrics(&id, &r.mask, &soft, &gt)?;
    Ok((trail, m))
}

/// Runs every case on the current rayon pool.
pub fn run_bench(spec: &BenchSpec, cfg: &GateConfig) -> Result<BenchResult> {
    spec.validate()?;
    cfg.validate()?;
    let rows = (0..spec.n_cases)
        .into_par_iter()
        .map(|i| run_case(spec, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let (cases, slices): (Vec<CaseTrail>, Vec<SliceMetrics>) = rows.into_iter().unzip();

    let kept: usize = cases.iter().map(|c| c.kept).sum();
    let kept_true: usize = cases.iter().map(|c| c.kept_true).sum();
    let planted: usize = cases.iter().map(|c| c.planted).sum();
    let recovered: usize = cases.iter().map(|c| c.recovered).sum();
    let null_tests: usize = cases.iter().map(|c| c.null_candidates).sum();
    let null_bh_kept: usize = cases.iter().map(|c| c.null_bh_kept).sum();
    let families: Vec<&CaseTrail> = cases.iter().filter(|c| c.candidates > 0).collect();
    let fdp_sum: f64 = families
        .iter()
        .map(|c| {
            if c.bh_kept == 0 {
                0.0
            } else {
                c.null_bh_kept as f64 / c.bh_kept as f64
            }
        })
        .sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let alpha = cfg.statistical.alpha;
    let n_fam = families.len();
    let metrics = MetricsReport::aggregate(slices);
    Ok(BenchResult {
        n_cases: spec.n_cases,
        n_positive: cases.iter().filter(|c| c.positive).count(),
        empirical_fdr: ratio(kept - kept_true, kept),
        power: ratio(recovered, planted),
        slice_sensitivity: metrics.sensitivity,
        slice_specificity: metrics.specificity,
        screen_fdr: if n_fam == 0 { 0.0 } else { fdp_sum / n_fam as f64 },
        screen_families: n_fam,
        null_tests,
        null_bh_kept,
        null_kept_fraction: ratio(null_bh_kept, null_tests),
        alpha,
        screen_fdr_bound: if n_fam == 0 {
            alpha
        } else {
            alpha + 2.0 * (alpha * (1.0 - alpha) / n_fam as f64).sqrt()
        },
        metrics: (spec.n_cases > 0).then_some(metrics),
        cases,
    })
}

/// Writes the benchmark cases as files plus a manifest that `run` accepts.
/// Plans omit padding and scales so the run configuration supplies them.
pub fn write_dataset(spec: &BenchSpec, dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    for sub in ["images", "maps", "plans", "gt"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let entries = (0..spec.n_cases)
        .into_par_iter()
        .map(|i| -> Result<ManifestEntry> {
            let id = BenchSpec::image_id(i);
            let scene = spec.case_scene(i);
            let image = format!("images/{id}.sgrid");
            let organ = format!("maps/{id}_organ.sgrid");
            let tumor = format!("maps/{id}_tumor.sgrid");
            let plan = format!("plans/{id}.json");
            let gt = format!("gt/{id}.sgrid");
            sgrid::write(dir.join(&image), &render_intensity(&scene)?)?;
            sgrid::write(dir.join(&organ), &render_synthetic(&scene, PromptKind::Organ)?)?;
            sgrid::write(dir.join(&tumor), &render_synthetic(&scene, PromptKind::Tumor)?)?;
            sgrid::write_mask(dir.join(&gt), &scene.lesion_mask(), scene.spacing)?;
            let plan_json = serde_json::json!({
                "anchors": [ORGAN_PROMPT],
                "roi": { "square": true },
                "rationale": "lesions of this organ lie within its outline",
                "tumor_prompt": TUMOR_PROMPT,
            });
            let p = dir.join(&plan);
            fs::write(&p, serde_json::to_string_pretty(&plan_json).expect("json") + "\n")
                .map_err(|e| Error::io(&p, e))?;
            Ok(ManifestEntry {
                image_id: id,
                intensity: image.into(),
                spacing_mm: Some((scene.spacing.x, scene.spacing.y)),
                maps: [
                    (ORGAN_PROMPT.to_owned(), organ.into()),
                    (TUMOR_PROMPT.to_owned(), tumor.into()),
                ]
                .into(),
                plan: plan.into(),
                ground_truth: Some(gt.into()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { entries };
    let p = dir.join("manifest.json");
    fs::write(&p, manifest.to_json() + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_defaults_and_validation() {
        let s = BenchSpec::default();
        s.validate().unwrap();
        assert_eq!(s.n_positive(), 100);
        assert_eq!(BenchSpec::from_toml(&s.to_toml()).unwrap(), s);
        let err = BenchSpec::from_toml("fraction_positive = 1.5").unwrap_err().to_string();
        assert!(err.contains("fraction_positive"), "{err}");
        assert!(BenchSpec::from_toml("effect_size = -1")
            .unwrap_err()
            .to_string()
            .contains("effect_size"));
        assert!(BenchSpec::from_toml("[scene]\nlesion_radius = 40.0").is_err());
        assert!(BenchSpec::from_toml("[scene]\nclutter_peak = [0.9, 0.5]").is_err());
        assert!(BenchSpec::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn scenes_are_deterministic_and_lesions_sit_in_the_organ() {
        let s = BenchSpec {
            n_cases: 6,
            seed: 4,
            ..Default::default()
        };
        for i in 0..6 {
            let a = s.case_scene(i);
            assert_eq!(a, s.case_scene(i));
            let organ = a.organ_region();
            assert!(a.lesion_mask().is_subset_of(&organ));
            assert_eq!(a.lesion_blobs.len(), usize::from(i < 3));
            assert_eq!(a.clutter.count, if i < 3 { 0 } else { 2 });
        }
    }

    #[test]
    fn empty_bench() {
        let s = BenchSpec {
            n_cases: 0,
            ..Default::default()
        };
        let r = run_bench(&s, &GateConfig::default()).unwrap();
        assert_eq!(r.empirical_fdr, 0.0);
        assert_eq!(r.slice_specificity, 1.0);
        assert!(r.cases.is_empty());
        assert!(r.screen_fdr_within_bound());
    }

    #[test]
    fn clean_negatives_stay_empty() {
        let s = BenchSpec {
            n_cases: 4,
            fraction_positive: 0.0,
            clutter_rate: 0,
            ..Default::default()
        };
        let r = run_bench(&s, &GateConfig::default()).unwrap();
        assert!(r.cases.iter().all(|c| !c.predicted_positive));
        assert_eq!(r.slice_specificity, 1.0);
    }

    #[test]
    fn small_mixed_bench() {
        let s = BenchSpec {
            n_cases: 8,
            seed: 11,
            ..Default::default()
        };
        let r = run_bench(&s, &GateConfig::default()).unwrap();
        assert_eq!(r.n_positive, 4);
        assert_eq!(r.power, 1.0, "{:#?}", r.cases);
        assert!((0.0..=1.0).contains(&r.empirical_fdr));
        assert_eq!(r, run_bench(&s, &GateConfig::default()).unwrap());
    }
}
