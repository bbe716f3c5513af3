//! Dataset manifests.
//!
//! ```json
//! {
//!   "entries": [
//!     {
//!       "image_id": "case_0000",
//!       "intensity": "images/case_0000.sgrid",
//!       "spacing_mm": [1.0, 1.0],
//!       "maps": { "organ": "maps/case_0000_organ.sgrid", "tumor": "maps/case_0000_tumor.sgrid" },
//!       "plan": "plans/case_0000.json",
//!       "ground_truth": "gt/case_0000.sgrid"
//!     }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. `spacing_mm`
//! and `ground_truth` are optional.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_id: String,
    pub intensity: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_mm: Option<(f64, f64)>,
    /// Prompt to probability-map file.
    pub maps: BTreeMap<String, PathBuf>,
    pub plan: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn invalid(msg: String) -> Error {
    Error::InvalidManifest(msg)
}

/// Ids double as file names, so they are restricted to a portable set.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Parses, resolves relative paths and checks ids and file existence.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        m.resolve(base);
        m.validate(true).map_err(|e| e.context(path.display().to_string()))?;
        Ok(m)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for e in &mut self.entries {
            fix(&mut e.intensity);
            fix(&mut e.plan);
            e.maps.values_mut().for_each(fix);
            if let Some(g) = e.ground_truth.as_mut() {
                fix(g);
            }
        }
    }

    pub fn validate(&self, check_files: bool) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !valid_id(&e.image_id) {
                return Err(invalid(format!(
                    "entries[{i}].image_id {:?}: use letters, digits, '.', '_' or '-'",
                    e.image_id
                )));
            }
            if !seen.insert(e.image_id.as_str()) {
                return Err(invalid(format!("entries[{i}].image_id {:?} is duplicated", e.image_id)));
            }
            if let Some((sx, sy)) = e.spacing_mm {
                if !(sx.is_finite() && sy.is_finite() && sx > 0.0 && sy > 0.0) {
                    return Err(invalid(format!("entries[{i}].spacing_mm must be positive")));
                }
            }
            if e.maps.is_empty() {
                return Err(invalid(format!("entries[{i}].maps is empty")));
            }
            if check_files {
                let mut files: Vec<(&str, &Path)> = vec![("intensity", &e.intensity), ("plan", &e.plan)];
                files.extend(e.maps.values().map(|p| ("maps", p.as_path())));
                if let Some(g) = &e.ground_truth {
                    files.push(("ground_truth", g));
                }
                for (field, p) in files {
                    if !p.is_file() {
                        return Err(invalid(format!("entries[{i}].{field}: {} does not exist", p.display())));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
