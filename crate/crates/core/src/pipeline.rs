//! One case end to end: anchors, ROIs, fusion, L1, candidates, screen,
//! BH, L2, L3, final mask.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{connected_components, describe, filter_min_area, CandidateRegion};
use crate::config::GateConfig;
use crate::error::Result;
use crate::fusion::run_tta;
use crate::gating::{gate_candidate, gate_case, gate_existence, GateLevel, GateVerdict, Rule};
use crate::geometry::{build_rois, ScaledRoi};
use crate::grid::{binarize, BinaryMask, ScalarGrid};
use crate::metrics::SliceMetrics;
use crate::plan::AnatomyPlan;
use crate::seed::derive_seed;
use crate::segmentor::{Segmentor, SegmentorRequest};
use crate::stats::{bh_fdr, two_sample_test, SampleSet, TestOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Kept,
    RejectedScreen,
    RejectedL2,
    RejectedL3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub stage: String,
    pub quantity: String,
    pub observed: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    #[serde(flatten)]
    pub region: CandidateRegion,
    /// Absent when the test could not be formed (see `screen_note`).
    pub test: Option<TestOutcome>,
    pub p_value: f64,
    pub bh_kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<GateVerdict>,
    pub status: CandidateStatus,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub image_id: String,
    pub anchors: Vec<String>,
    pub tumor_prompt: String,
    pub rois: Vec<ScaledRoi>,
    pub anchor_fallback: bool,
    pub control_pixels: usize,
    pub l1: GateVerdict,
    /// Components dropped by the minimum-area pre-filter.
    pub prefiltered: usize,
    pub candidates: Vec<CandidateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l3: Option<GateVerdict>,
    pub predicted_positive: bool,
    /// First gate that emptied the case, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_gate: Option<GateLevel>,
    pub final_pixels: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<SliceMetrics>,
    /// Wall time per stage in milliseconds; not covered by determinism.
    pub timing_ms: BTreeMap<String, f64>,
}

impl CaseReport {
    /// Report as JSON with the timing field removed.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("timing_ms");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub report: CaseReport,
    pub mask: BinaryMask,
    pub p_final: ScalarGrid,
}

struct Stopwatch {
    t: Instant,
    out: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            t: Instant::now(),
            out: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.out.insert(stage.to_owned(), (now - self.t).as_secs_f64() * 1e3);
        self.t = now;
    }
}

/// Screen inputs for one candidate: its normalized intensities, and those
/// of the control region minus the candidate.
fn screen_samples(c: &CandidateRegion, feature: &ScalarGrid, control: &BinaryMask) -> Result<(SampleSet, SampleSet)> {
    let mut own = BinaryMask::empty(control.dims());
    let x: Vec<f64> = c
        .pixels
        .iter()
        .map(|&(px, py)| {
            own.set(px, py, true);
            feature.get(px, py)
        })
        .collect();
    let y: Vec<f64> = control
        .difference(&own)?
        .pixels()
        .map(|(px, py)| feature.get(px, py))
        .collect();
    Ok((SampleSet::scalar(x)?, SampleSet::scalar(y)?))
}

fn rejections_from(stage: &str, verdict: &GateVerdict) -> Vec<Rejection> {
    verdict
        .reasons
        .iter()
        .map(|r| Rejection {
            stage: stage.to_owned(),
            quantity: r.quantity.clone(),
            observed: r.observed,
            threshold: r.threshold,
        })
        .collect()
}

/// Runs the full decision procedure for one image.
pub fn process_case(
    image_id: &str,
    intensity: &ScalarGrid,
    plan: &AnatomyPlan,
    segmentor: &dyn Segmentor,
    cfg: &GateConfig,
) -> Result<CaseResult> {
    cfg.validate()?;
    plan.validate()?;
    let mut sw = Stopwatch::new();
    let frame = intensity.dims();
    let spacing = intensity.spacing();
    let mut warnings = Vec::new();

    let mut anchor_masks = Vec::with_capacity(plan.anchors.len());
    for anchor in &plan.anchors {
        let p = segmentor
            .segment(&SegmentorRequest::full(image_id, anchor))
            .map_err(|e| e.context(format!("anchor {anchor:?}")))?;
        frame
            .ensure_same(p.dims())
            .map_err(|e| e.context(format!("anchor {anchor:?}")))?;
        anchor_masks.push(binarize(&p, plan.anchor_threshold)?);
    }
    let rois = build_rois(plan, &anchor_masks, frame, spacing)?;
    if rois.anchor_fallback {
        warnings.push("no anchor pixels; ROI falls back to the full frame and the control region is empty".to_owned());
    }
    sw.lap("planning");

    let tta = run_tta(image_id, &plan.tumor_prompt, &rois.rois, segmentor, &cfg.fusion())?;
    let p_final = tta.fused;
    frame.ensure_same(p_final.dims())?;
    sw.lap("fusion");

    let control = &rois.union_mask;
    let l1 = gate_existence(&p_final, &rois.domain(), control, cfg)?;
    sw.lap("l1");

    let mut report = CaseReport {
        image_id: image_id.to_owned(),
        anchors: plan.anchors.clone(),
        tumor_prompt: plan.tumor_prompt.clone(),
        rois: rois.rois.clone(),
        anchor_fallback: rois.anchor_fallback,
        control_pixels: control.count(),
        l1: l1.clone(),
        prefiltered: 0,
        candidates: Vec::new(),
        l3: None,
        predicted_positive: false,
        failed_gate: None,
        final_pixels: 0,
        warnings,
        mask_path: None,
        metrics: None,
        timing_ms: BTreeMap::new(),
    };
    if !l1.passed {
        report.failed_gate = Some(GateLevel::L1);
        report.timing_ms = sw.out;
        return Ok(CaseResult {
            report,
            mask: BinaryMask::empty(frame),
            p_final,
        });
    }

    let tumor_mask = binarize(&p_final, cfg.tau_tumor())?;
    let components = connected_components(&tumor_mask);
    let total = components.len();
    let components = filter_min_area(components, cfg.geometric.pre_filter_area);
    report.prefiltered = total - components.len();
    let regions = components
        .iter()
        .enumerate()
        .map(|(i, c)| describe(i, c, &p_final, control))
        .collect::<Result<Vec<_>>>()?;
    sw.lap("candidates");

    let feature = intensity.min_max_normalized();
    let test_cfg = cfg.test_config();
    let base_seed = cfg.statistical.seed;
    let screened: Vec<(Option<TestOutcome>, f64, Option<String>)> = regions
        .par_iter()
        .map(|c| -> Result<_> {
            let (x, y) = screen_samples(c, &feature, control)?;
            if x.len() < 2 || y.len() < 2 {
                return Ok((
                    None,
                    1.0,
                    Some(format!(
                        "degenerate sample (|X| = {}, |Y| = {}); p set to 1",
                        x.len(),
                        y.len()
                    )),
                ));
            }
            let seed = derive_seed(base_seed, &[image_id, &c.id.to_string(), "screen"]);
            let t = two_sample_test(&x, &y, &test_cfg, seed)?;
            let p = t.p_value;
            Ok((Some(t), p, None))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context("statistical screen"))?;
    let p_values: Vec<f64> = screened.iter().map(|s| s.1).collect();
    let kept = bh_fdr(&p_values, cfg.statistical.alpha);
    sw.lap("screen");

    let mut l2_survivors = Vec::new();
    for ((region, (test, p, note)), bh) in regions.into_iter().zip(screened).zip(kept) {
        let mut cr = CandidateReport {
            test: test.map(|mut t| {
                t.bh_kept = bh;
                t
            }),
            p_value: p,
            bh_kept: bh,
            screen_note: note,
            l2: None,
            status: CandidateStatus::RejectedScreen,
            rejections: Vec::new(),
            region,
        };
        if !bh {
            cr.rejections.push(Rejection {
                stage: "screen".to_owned(),
                quantity: "p_value".to_owned(),
                observed: p,
                threshold: cfg.statistical.alpha,
            });
        } else {
            let v = gate_candidate(&cr.region, cfg);
            if v.passed {
                cr.status = CandidateStatus::Kept;
                l2_survivors.push(cr.region.clone());
            } else {
                cr.status = CandidateStatus::RejectedL2;
                cr.rejections = rejections_from("l2", &v);
            }
            cr.l2 = Some(v);
        }
        report.candidates.push(cr);
    }

    let had_survivors = !l2_survivors.is_empty();
    let (final_set, l3) = gate_case(l2_survivors, cfg);
    if had_survivors && final_set.is_empty() {
        for cr in report
            .candidates
            .iter_mut()
            .filter(|c| c.status == CandidateStatus::Kept)
        {
            cr.status = CandidateStatus::RejectedL3;
            cr.rejections = rejections_from("l3", &l3);
        }
    }
    if final_set.is_empty() {
        report.failed_gate = Some(if had_survivors { GateLevel::L3 } else { GateLevel::L2 });
    }
    report.l3 = Some(l3);

    let mut mask = BinaryMask::empty(frame);
    for c in &final_set {
        for &(x, y) in &c.pixels {
            mask.set(x, y, true);
        }
    }
    report.final_pixels = mask.count();
    report.predicted_positive = !mask.is_empty();
    sw.lap("gating");
    report.timing_ms = sw.out;
    debug_assert!(report
        .candidates
        .iter()
        .all(|c| c.status == CandidateStatus::Kept || !c.rejections.is_empty()));
    Ok(CaseResult { report, mask, p_final })
}

fn verdict_line(out: &mut String, name: &str, v: &GateVerdict) {
    use std::fmt::Write;
    let _ = writeln!(out, "{name}: {}", if v.passed { "pass" } else { "FAIL" });
    for c in &v.checks {
        let op = match c.rule {
            Rule::AtLeast => ">=",
            Rule::AtMost => "<=",
        };
        let mark = if c.passed { " " } else { "x" };
        let _ = writeln!(
            out,
            "  [{mark}] {} = {:.6} (needs {op} {})",
            c.quantity, c.observed, c.threshold
        );
    }
    for n in &v.notes {
        let _ = writeln!(out, "  note: {n}");
    }
}

/// Plain-text rendering of a report for terminals.
pub fn render_report(r: &CaseReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "image {}", r.image_id);
    let _ = writeln!(out, "anchors {:?} -> prompt {:?}", r.anchors, r.tumor_prompt);
    for roi in &r.rois {
        let b = roi.bbox;
        let _ = writeln!(out, "  roi x{}: ({}, {})-({}, {})", roi.scale, b.x0, b.y0, b.x1, b.y1);
    }
    let _ = writeln!(out, "control region {} px", r.control_pixels);
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    verdict_line(&mut out, "L1 existence", &r.l1);
    if !r.candidates.is_empty() || r.prefiltered > 0 {
        let _ = writeln!(
            out,
            "candidates: {} ({} below the pre-filter area)",
            r.candidates.len(),
            r.prefiltered
        );
    }
    for c in &r.candidates {
        let g = &c.region;
        let _ = writeln!(
            out,
            "  #{} area {} mean {:.3} overlap {:.3} p {:.4} bh {} -> {:?}",
            g.id, g.area, g.mean_prob, g.overlap_with_control, c.p_value, c.bh_kept, c.status
        );
        for rj in &c.rejections {
            let _ = writeln!(
                out,
                "      {}: {} = {:.6} vs {}",
                rj.stage, rj.quantity, rj.observed, rj.threshold
            );
        }
    }
    if let Some(v) = &r.l3 {
        verdict_line(&mut out, "L3 case", v);
    }
    let _ = writeln!(
        out,
        "decision: {} ({} px)",
        if r.predicted_positive { "positive" } else { "negative" },
        r.final_pixels
    );
    if let Some(m) = &r.metrics {
        let _ = writeln!(
            out,
            "dice {:.4}  soft dice {:.4}  accuracy {:.4}  class average {:.4}",
            m.dice, m.soft_dice, m.accuracy, m.class_average
        );
    }
    if !r.timing_ms.is_empty() {
        let parts: Vec<String> = r.timing_ms.iter().map(|(k, v)| format!("{k} {v:.1} ms")).collect();
        let _ = writeln!(out, "timing: {}", parts.join(", "));
    }
    out
}
