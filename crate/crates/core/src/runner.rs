//! Batch execution of a manifest.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! masks/<image_id>.sgrid
//! reports/<image_id>.json
//! summary.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::GateConfig;
use crate::error::{Error, Result};
use crate::gating::GateLevel;
use crate::manifest::{Manifest, ManifestEntry};
use crate::metrics::{slice_metrics, MetricsReport, SliceMetrics};
use crate::pipeline::{process_case, CaseReport};
use crate::plan::AnatomyPlan;
use crate::segmentor::FileSegmentor;
use crate::sgrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseLine {
    pub image_id: String,
    pub predicted_positive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_gate: Option<GateLevel>,
    pub final_pixels: usize,
    pub mask: String,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub cases: usize,
    pub succeeded: usize,
    pub predicted_positive: usize,
    pub lines: Vec<CaseLine>,
    pub failures: Vec<CaseFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

impl RunSummary {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

fn run_entry(entry: &ManifestEntry, cfg: &GateConfig, out: &Path) -> Result<(CaseReport, Option<SliceMetrics>)> {
    let id = entry.image_id.as_str();
    let intensity = sgrid::read(&entry.intensity)?;
    if let Some((sx, sy)) = entry.spacing_mm {
        let s = intensity.spacing();
        if (s.x - sx).abs() > 1e-6 * sx || (s.y - sy).abs() > 1e-6 * sy {
            return Err(Error::InvalidManifest(format!(
                "spacing ({sx}, {sy}) does not match the image header ({}, {})",
                s.x, s.y
            )));
        }
    }
    let mut seg = FileSegmentor::new();
    for (prompt, path) in &entry.maps {
        let map = sgrid::read(path)?;
        intensity
            .dims()
            .ensure_same(map.dims())
            .map_err(|e| e.context(format!("map {}", path.display())))?;
        seg.insert(id, prompt, map)?;
    }
    let plan = AnatomyPlan::load(&entry.plan, &cfg.roi_rules())?;
    let result = process_case(id, &intensity, &plan, &seg, cfg)?;

    let mask_path = out.join("masks").join(format!("{id}.sgrid"));
    sgrid::write_mask(&mask_path, &result.mask, intensity.spacing())?;
    let mut report = result.report;
    report.mask_path = Some(rel(out, &mask_path));

    let metrics = match &entry.ground_truth {
        Some(p) => {
            let gt = sgrid::read_mask(p)?;
            let soft = result.p_final.masked(&result.mask)?;
            Some(slice_metrics(id, &result.mask, &soft, &gt)?)
        }
        None => None,
    };
    report.metrics = metrics.clone();
    Ok((report, metrics))
}

fn report_path(out: &Path, id: &str) -> PathBuf {
    out.join("reports").join(format!("{id}.json"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("record serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Processes every entry with up to `jobs` worker threads. A failing case
/// is recorded and does not stop the others.
pub fn run_manifest(manifest: &Manifest, cfg: &GateConfig, out: &Path, jobs: usize) -> Result<RunSummary> {
    cfg.validate()?;
    for sub in ["masks", "reports"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    type Outcome = std::result::Result<(CaseReport, Option<SliceMetrics>), String>;
    let outcomes: Vec<Outcome> = with_jobs(jobs, || {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let r = run_entry(e, cfg, out).and_then(|(report, m)| {
                    write_json(&report_path(out, &e.image_id), &report)?;
                    Ok((report, m))
                });
                r.map_err(|err| err.to_string())
            })
            .collect()
    })?;

    let mut summary = RunSummary {
        cases: manifest.entries.len(),
        succeeded: 0,
        predicted_positive: 0,
        lines: Vec::new(),
        failures: Vec::new(),
        metrics: None,
    };
    let mut slices = Vec::new();
    for (entry, outcome) in manifest.entries.iter().zip(outcomes) {
        match outcome {
            Ok((report, m)) => {
                summary.succeeded += 1;
                summary.predicted_positive += usize::from(report.predicted_positive);
                summary.lines.push(CaseLine {
                    image_id: report.image_id.clone(),
                    predicted_positive: report.predicted_positive,
                    failed_gate: report.failed_gate,
                    final_pixels: report.final_pixels,
                    mask: report.mask_path.clone().unwrap_or_default(),
                    report: rel(out, &report_path(out, &entry.image_id)),
                });
                slices.extend(m);
            }
            Err(error) => summary.failures.push(CaseFailure {
                image_id: entry.image_id.clone(),
                error,
            }),
        }
    }
    if !slices.is_empty() {
        summary.metrics = Some(MetricsReport::aggregate(slices));
    }
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Runs `f` on a dedicated pool of `jobs` threads (at least one).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Reads a report written by [`run_manifest`].
pub fn load_report(path: impl AsRef<Path>) -> Result<CaseReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    })
}
