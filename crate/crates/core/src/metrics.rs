//! Pixel- and slice-level evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{BinaryMask, ScalarGrid};

pub const SOFT_DICE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Confusion {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<Confusion> {
    pred.dims().ensure_same(gt.dims())?;
    let mut c = Confusion::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `2|P ∩ G| / (|P| + |G|)`; 1 when both masks are empty. Also the F1
/// score.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    Ok(if denom == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    })
}

/// `(2 Σ p g + ε) / (Σ p + Σ g + ε)`; 1 when the prediction sums to 0 and
/// the ground truth is empty.
pub fn soft_dice(prob: &ScalarGrid, gt: &BinaryMask, epsilon: f64) -> Result<f64> {
    prob.dims().ensure_same(gt.dims())?;
    let (mut inter, mut sp) = (0.0, 0.0);
    for (&p, &g) in prob.values().iter().zip(gt.bits()) {
        sp += p;
        if g {
            inter += p;
        }
    }
    let sg = gt.count() as f64;
    if sp == 0.0 && sg == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * inter + epsilon) / (sp + sg + epsilon))
}

pub fn accuracy(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    Ok((c.tp + c.tn) as f64 / gt.dims().len() as f64)
}

/// Mean of the positive-class and negative-class pixel accuracies. A class
/// missing from the ground truth scores 1 when the prediction has no pixel
/// of that class either, else 0.
pub fn class_average_accuracy(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    let tpr = if c.tp + c.fn_ > 0 {
        c.tp as f64 / (c.tp + c.fn_) as f64
    } else if c.fp == 0 {
        1.0
    } else {
        0.0
    };
    let tnr = if c.tn + c.fp > 0 {
        c.tn as f64 / (c.tn + c.fp) as f64
    } else if c.fn_ == 0 {
        1.0
    } else {
        0.0
    };
    Ok(0.5 * (tpr + tnr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceOutcome {
    pub predicted_positive: bool,
    pub actually_positive: bool,
}

impl SliceOutcome {
    pub fn from_masks(pred: &BinaryMask, gt: &BinaryMask) -> Self {
        Self {
            predicted_positive: !pred.is_empty(),
            actually_positive: !gt.is_empty(),
        }
    }
}

/// Slice sensitivity and specificity. Sensitivity is 0 without positive
/// slices; specificity is 1 without negative slices.
pub fn slice_sensitivity_specificity(outcomes: &[SliceOutcome]) -> (f64, f64) {
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for o in outcomes {
        match (o.actually_positive, o.predicted_positive) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let sens = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let spec = if tn + fp == 0 {
        1.0
    } else {
        tn as f64 / (tn + fp) as f64
    };
    (sens, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub image_id: String,
    pub dice: f64,
    /// Same value as `dice`.
    pub f1: f64,
    pub soft_dice: f64,
    pub accuracy: f64,
    pub class_average: f64,
    pub outcome: SliceOutcome,
}

/// Per-slice metrics. `prob` is the soft prediction that accompanies
/// `pred`.
pub fn slice_metrics(image_id: &str, pred: &BinaryMask, prob: &ScalarGrid, gt: &BinaryMask) -> Result<SliceMetrics> {
    let d = dice(pred, gt)?;
    Ok(SliceMetrics {
        image_id: image_id.to_owned(),
        dice: d,
        f1: d,
        soft_dice: soft_dice(prob, gt, SOFT_DICE_EPSILON)?,
        accuracy: accuracy(pred, gt)?,
        class_average: class_average_accuracy(pred, gt)?,
        outcome: SliceOutcome::from_masks(pred, gt),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for fewer than two values).
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub slices: Vec<SliceMetrics>,
    pub dice: MeanStd,
    pub f1: MeanStd,
    pub soft_dice: MeanStd,
    pub accuracy: MeanStd,
    pub class_average: MeanStd,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl MetricsReport {
    pub fn aggregate(slices: Vec<SliceMetrics>) -> Self {
        let col = |f: fn(&SliceMetrics) -> f64| MeanStd::of(&slices.iter().map(f).collect::<Vec<_>>());
        let outcomes: Vec<SliceOutcome> = slices.iter().map(|s| s.outcome).collect();
        let (sensitivity, specificity) = slice_sensitivity_specificity(&outcomes);
        Self {
            dice: col(|s| s.dice),
            f1: col(|s| s.f1),
            soft_dice: col(|s| s.soft_dice),
            accuracy: col(|s| s.accuracy),
            class_average: col(|s| s.class_average),
            sensitivity,
            specificity,
            slices,
        }
    }
}
