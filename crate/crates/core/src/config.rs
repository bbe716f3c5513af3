//! Run configuration, grouped as scoring / statistical / geometric.
//!
//! ```toml
//! [scoring]
//! tau_bin = 0.4
//! view_rule = "max"
//! scales = [0.8, 1.0, 1.2]
//!
//! [statistical]
//! alpha = 0.05
//! permutations = 199
//!
//! [geometric]
//! tau_case = 2.0
//! padding_mm = 25
//! ```
//!
//! Missing keys keep their defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, ViewRule, ViewTransform};
use crate::plan::RoiRules;
use crate::stats::{Statistic, TestConfig};

/// Allowed range for the binarization threshold.
pub const TAU_BIN_RANGE: (f64, f64) = (0.30, 0.55);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub tau_bin: f64,
    /// Threshold for the tumor mask when it should differ from `tau_bin`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_tumor: Option<f64>,
    pub view_rule: ViewRule,
    pub transforms: Vec<ViewTransform>,
    pub scales: Vec<f64>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            tau_bin: 0.4,
            tau_tumor: None,
            view_rule: ViewRule::Max,
            transforms: ViewTransform::ALL.to_vec(),
            scales: vec![0.8, 1.0, 1.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticalConfig {
    pub alpha: f64,
    pub permutations: usize,
    pub sample_cap: usize,
    pub tau_ks: f64,
    pub statistic: Statistic,
    pub seed: u64,
}

impl Default for StatisticalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            permutations: 199,
            sample_cap: 4000,
            tau_ks: 0.05,
            statistic: Statistic::Mmd2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometricConfig {
    pub tau_max: f64,
    pub tau_ratio: f64,
    pub a_min: usize,
    pub tau_mean: f64,
    pub tau_intersect: f64,
    pub tau_case: f64,
    pub pre_filter_area: usize,
    pub padding_mm: f64,
}

impl Default for GeometricConfig {
    fn default() -> Self {
        Self {
            tau_max: 0.45,
            tau_ratio: 2e-4,
            a_min: 80,
            tau_mean: 0.5,
            tau_intersect: 0.05,
            tau_case: 2.0,
            pre_filter_area: 50,
            padding_mm: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub scoring: ScoringConfig,
    pub statistical: StatisticalConfig,
    pub geometric: GeometricConfig,
}

fn in_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::ThresholdOutOfRange { name, value, lo, hi })
    }
}

impl GateConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg = Self::parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without range checks, for callers that apply overrides before
    /// validating.
    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg = Self::load_unchecked(&path)?;
        cfg.validate()
            .map_err(|e| e.context(path.as_ref().display().to_string()))?;
        Ok(cfg)
    }

    /// [`GateConfig::load`] without the range checks.
    pub fn load_unchecked(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_toml(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Thresholds that let every candidate through every gate; only the
    /// screen's α still decides. Used to study the screen in isolation.
    pub fn gates_disabled(mut self) -> Self {
        let g = &mut self.geometric;
        g.tau_max = 0.0;
        g.tau_ratio = 0.0;
        g.a_min = 0;
        g.tau_mean = 0.0;
        g.tau_intersect = 0.0;
        g.tau_case = 0.0;
        self.statistical.tau_ks = 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scoring;
        in_range("tau_bin", s.tau_bin, TAU_BIN_RANGE.0, TAU_BIN_RANGE.1)?;
        if let Some(t) = s.tau_tumor {
            in_range("tau_tumor", t, 0.0, 1.0)?;
        }
        self.fusion().validate()?;
        self.roi_rules_check()?;

        let st = &self.statistical;
        self.test_config().validate()?;
        in_range("tau_ks", st.tau_ks, 0.0, 1.0)?;

        let g = &self.geometric;
        in_range("tau_max", g.tau_max, 0.0, 1.0)?;
        in_range("tau_ratio", g.tau_ratio, 0.0, 1.0)?;
        in_range("tau_mean", g.tau_mean, 0.0, 1.0)?;
        in_range("tau_intersect", g.tau_intersect, 0.0, 1.0)?;
        in_range("tau_case", g.tau_case, 0.0, f64::MAX)?;
        in_range("padding_mm", g.padding_mm, 0.0, f64::MAX)?;
        Ok(())
    }

    fn roi_rules_check(&self) -> Result<()> {
        if self.scoring.scales.is_empty() {
            return Err(Error::InvalidConfig(
                "scoring.scales: at least one scale is required".into(),
            ));
        }
        if let Some(s) = self.scoring.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "scoring.scales: {s} is not a positive number"
            )));
        }
        Ok(())
    }

    /// Threshold for the tumor mask.
    pub fn tau_tumor(&self) -> f64 {
        self.scoring.tau_tumor.unwrap_or(self.scoring.tau_bin)
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            view_rule: self.scoring.view_rule,
            transforms: self.scoring.transforms.clone(),
        }
    }

    pub fn test_config(&self) -> TestConfig {
        let s = &self.statistical;
        TestConfig {
            permutations: s.permutations,
            alpha: s.alpha,
            sample_cap: s.sample_cap,
            statistic: s.statistic,
            seed: s.seed,
        }
    }

    /// ROI rules a plan falls back to when it omits padding or scales.
    pub fn roi_rules(&self) -> RoiRules {
        RoiRules {
            padding_mm: (self.geometric.padding_mm, self.geometric.padding_mm),
            scales: self.scoring.scales.clone(),
            square: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = GateConfig::default();
        c.validate().unwrap();
        assert_eq!(c.scoring.tau_bin, 0.4);
        assert_eq!(c.statistical.alpha, 0.05);
        assert_eq!(c.statistical.permutations, 199);
        assert_eq!(c.statistical.sample_cap, 4000);
        assert_eq!(c.geometric.tau_max, 0.45);
        assert_eq!(c.geometric.tau_ratio, 2e-4);
        assert_eq!(c.geometric.a_min, 80);
        assert_eq!(c.geometric.tau_case, 2.0);
        assert_eq!(c.geometric.pre_filter_area, 50);
        assert_eq!(c.tau_tumor(), 0.4);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = GateConfig::from_toml("[geometric]\ntau_case = 3.5\n[scoring]\nview_rule = \"median\"\n").unwrap();
        assert_eq!(c.geometric.tau_case, 3.5);
        assert_eq!(c.scoring.view_rule, ViewRule::Median);
        assert_eq!(c.geometric.a_min, 80);
        assert_eq!(GateConfig::from_toml("").unwrap(), GateConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = GateConfig::default();
        c.scoring.tau_tumor = Some(0.5);
        c.statistical.statistic = Statistic::Energy;
        assert_eq!(GateConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        let err = GateConfig::from_toml("[scoring]\ntau_bin = 0.7\n").unwrap_err();
        assert!(err.to_string().contains("tau_bin"), "{err}");
        assert!(GateConfig::from_toml("[statistical]\npermutations = 5\n").is_err());
        assert!(GateConfig::from_toml("[geometric]\ntau_mean = 1.5\n").is_err());
        assert!(GateConfig::from_toml("[geometric]\nbogus = 1\n").is_err());
        assert!(GateConfig::from_toml("[scoring]\nscales = []\n").is_err());
        assert!(GateConfig::from_toml("[scoring]\ntransforms = []\n").is_err());
    }

    #[test]
    fn disabled_gates_still_valid() {
        GateConfig::default().gates_disabled().validate().unwrap();
    }
}
