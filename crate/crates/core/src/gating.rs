//! Three-level false-positive gating.
//!
//! - L1 decides whether the case holds anything at all.
//! - L2 filters individual candidates that survived the statistical screen.
//! - L3 keeps or drops the surviving set as a whole.

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateRegion;
use crate::config::GateConfig;
use crate::error::Result;
use crate::grid::{positive_ratio, BinaryMask, ScalarGrid};
use crate::stats::ks_two_sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateLevel {
    L1,
    L2,
    L3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Passes when `observed >= threshold`.
    AtLeast,
    /// Passes when `observed <= threshold`.
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCheck {
    pub quantity: String,
    pub observed: f64,
    pub threshold: f64,
    pub rule: Rule,
    pub passed: bool,
}

impl GateCheck {
    pub fn new(quantity: &str, observed: f64, threshold: f64, rule: Rule) -> Self {
        let mut c = Self {
            quantity: quantity.to_owned(),
            observed,
            threshold,
            rule,
            passed: false,
        };
        c.passed = c.evaluate();
        c
    }

    /// Re-applies the rule to the recorded numbers.
    pub fn evaluate(&self) -> bool {
        match self.rule {
            Rule::AtLeast => self.observed >= self.threshold,
            Rule::AtMost => self.observed <= self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub level: GateLevel,
    pub passed: bool,
    /// Every check that was evaluated.
    pub checks: Vec<GateCheck>,
    /// The failed checks.
    pub reasons: Vec<GateCheck>,
    /// Skipped checks and warnings.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl GateVerdict {
    fn from_checks(level: GateLevel, checks: Vec<GateCheck>, notes: Vec<String>) -> Self {
        let reasons: Vec<GateCheck> = checks.iter().filter(|c| !c.passed).cloned().collect();
        Self {
            level,
            passed: reasons.is_empty(),
            checks,
            reasons,
            notes,
        }
    }

    /// Whether the recorded numbers reproduce the decision.
    pub fn is_consistent(&self) -> bool {
        self.checks.iter().all(|c| c.passed == c.evaluate())
            && self.passed == self.checks.iter().all(GateCheck::evaluate)
            && self.reasons.iter().all(|r| !r.evaluate())
    }
}

/// L1: global maximum, positive ratio inside the ROI domain, and a KS test
/// of probabilities inside versus outside the control region. An empty
/// `roi_domain` means the whole frame.
pub fn gate_existence(
    p_final: &ScalarGrid,
    roi_domain: &BinaryMask,
    control_mask: &BinaryMask,
    cfg: &GateConfig,
) -> Result<GateVerdict> {
    p_final.dims().ensure_same(roi_domain.dims())?;
    p_final.dims().ensure_same(control_mask.dims())?;
    let g = &cfg.geometric;
    let mut notes = Vec::new();
    let mut checks = vec![GateCheck::new("p_max", p_final.max_value(), g.tau_max, Rule::AtLeast)];

    let domain = if roi_domain.is_empty() {
        notes.push("ROI domain empty; positive ratio taken over the full frame".to_owned());
        BinaryMask::full(p_final.dims())
    } else {
        roi_domain.clone()
    };
    let rho = positive_ratio(p_final, &domain, cfg.scoring.tau_bin)?;
    checks.push(GateCheck::new("positive_ratio", rho, g.tau_ratio, Rule::AtLeast));

    let inside = control_mask.count();
    if inside == 0 || inside == control_mask.dims().len() {
        notes.push(format!(
            "KS test skipped: control region covers {inside} of {} pixels",
            control_mask.dims().len()
        ));
    } else {
        let mut fg = Vec::with_capacity(inside);
        let mut bg = Vec::with_capacity(control_mask.dims().len() - inside);
        for (&v, &m) in p_final.values().iter().zip(control_mask.bits()) {
            if m {
                fg.push(v);
            } else {
                bg.push(v);
            }
        }
        let ks = ks_two_sample(&fg, &bg)?;
        checks.push(GateCheck::new(
            "ks_p_value",
            ks.p_value,
            cfg.statistical.tau_ks,
            Rule::AtMost,
        ));
    }
    Ok(GateVerdict::from_checks(GateLevel::L1, checks, notes))
}

/// L2: area, mean probability and overlap with the control region.
pub fn gate_candidate(c: &CandidateRegion, cfg: &GateConfig) -> GateVerdict {
    let g = &cfg.geometric;
    GateVerdict::from_checks(
        GateLevel::L2,
        vec![
            GateCheck::new("area", c.area as f64, g.a_min as f64, Rule::AtLeast),
            GateCheck::new("mean_prob", c.mean_prob, g.tau_mean, Rule::AtLeast),
            GateCheck::new(
                "overlap_with_control",
                c.overlap_with_control,
                g.tau_intersect,
                Rule::AtLeast,
            ),
        ],
        Vec::new(),
    )
}

/// L3: the best stability score `mean_prob * sqrt(area)` must reach
/// `tau_case`, otherwise nothing survives.
pub fn gate_case(survivors: Vec<CandidateRegion>, cfg: &GateConfig) -> (Vec<CandidateRegion>, GateVerdict) {
    let check = if survivors.is_empty() {
        GateCheck::new("survivors", 0.0, 1.0, Rule::AtLeast)
    } else {
        let s_star = survivors
            .iter()
            .map(CandidateRegion::stability_score)
            .fold(f64::NEG_INFINITY, f64::max);
        GateCheck::new("s_star", s_star, cfg.geometric.tau_case, Rule::AtLeast)
    };
    let verdict = GateVerdict::from_checks(GateLevel::L3, vec![check], Vec::new());
    if verdict.passed {
        (survivors, verdict)
    } else {
        (Vec::new(), verdict)
    }
}
