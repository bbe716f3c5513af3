//! Anatomy plans: anchor organs plus ROI rules, read from JSON.
//!
//! ```json
//! {
//!   "anchors": ["liver", "right kidney"],
//!   "roi": { "padding_mm": [25, 25], "scales": [0.8, 1.0, 1.2], "square": true },
//!   "rationale": "hepatic lesions sit inside the liver capsule",
//!   "tumor_prompt": "liver tumor",
//!   "anchor_threshold": 0.5
//! }
//! ```
//!
//! `padding_mm` may be a single number (applied to both axes). `padding_mm`
//! and `scales` may be omitted, in which case the run configuration supplies
//! them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ANCHOR_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiRules {
    pub padding_mm: (f64, f64),
    pub scales: Vec<f64>,
    pub square: bool,
}

impl Default for RoiRules {
    fn default() -> Self {
        Self {
            padding_mm: (25.0, 25.0),
            scales: vec![0.8, 1.0, 1.2],
            square: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnatomyPlan {
    pub anchors: Vec<String>,
    pub roi: RoiRules,
    pub rationale: String,
    pub tumor_prompt: String,
    pub anchor_threshold: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Padding {
    Scalar(f64),
    Pair([f64; 2]),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RoiFile {
    padding_mm: Option<Padding>,
    scales: Option<Vec<f64>>,
    square: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    anchors: Vec<String>,
    roi: RoiFile,
    #[serde(default)]
    rationale: String,
    tumor_prompt: String,
    anchor_threshold: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidPlan(msg.into())
}

impl AnatomyPlan {
    /// Parses and validates a plan, taking padding and scales from
    /// `defaults` when the document leaves them out.
    pub fn from_json(text: &str, defaults: &RoiRules) -> Result<Self> {
        let file: PlanFile = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let padding_mm = match file.roi.padding_mm {
            None => defaults.padding_mm,
            Some(Padding::Scalar(d)) => (d, d),
            Some(Padding::Pair([dx, dy])) => (dx, dy),
        };
        let plan = Self {
            anchors: file.anchors,
            roi: RoiRules {
                padding_mm,
                scales: file.roi.scales.unwrap_or_else(|| defaults.scales.clone()),
                square: file.roi.square,
            },
            rationale: file.rationale,
            tumor_prompt: file.tumor_prompt,
            anchor_threshold: file.anchor_threshold.unwrap_or(DEFAULT_ANCHOR_THRESHOLD),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>, defaults: &RoiRules) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, defaults).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "anchors": self.anchors,
            "roi": {
                "padding_mm": [self.roi.padding_mm.0, self.roi.padding_mm.1],
                "scales": self.roi.scales,
                "square": self.roi.square,
            },
            "rationale": self.rationale,
            "tumor_prompt": self.tumor_prompt,
            "anchor_threshold": self.anchor_threshold,
        })
        .to_string()
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(invalid("anchors: at least one anchor organ is required"));
        }
        if let Some(i) = self.anchors.iter().position(|a| a.trim().is_empty()) {
            return Err(invalid(format!("anchors[{i}]: empty organ name")));
        }
        let (dx, dy) = self.roi.padding_mm;
        if !(dx.is_finite() && dy.is_finite() && dx >= 0.0 && dy >= 0.0) {
            return Err(invalid(format!(
                "roi.padding_mm: must be non-negative, got ({dx}, {dy})"
            )));
        }
        if self.roi.scales.is_empty() {
            return Err(invalid("roi.scales: at least one scale is required"));
        }
        if let Some(s) = self.roi.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid(format!("roi.scales: {s} is not a positive number")));
        }
        if self.tumor_prompt.trim().is_empty() {
            return Err(invalid("tumor_prompt: must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.anchor_threshold) {
            return Err(invalid(format!(
                "anchor_threshold: {} outside [0, 1]",
                self.anchor_threshold
            )));
        }
        Ok(())
    }
}
