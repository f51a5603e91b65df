//! One-pass evaluation: success AUC, center precision and normalized
//! precision, with per-sequence and per-attribute breakdowns.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqtok::BBox;

pub const SUCCESS_STEPS: usize = 20;
pub const NORM_PRECISION_STEPS: usize = 50;
pub const DEFAULT_PRECISION_PX: f64 = 20.0;

/// IoU thresholds `0, 0.05, ..., 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=SUCCESS_STEPS).map(|k| k as f64 / SUCCESS_STEPS as f64).collect()
}

/// Normalized center-error thresholds `0, 0.01, ..., 0.5`.
pub fn norm_precision_thresholds() -> Vec<f64> {
    (0..=NORM_PRECISION_STEPS).map(|k| k as f64 / 100.0).collect()
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.to_corner().coords;
    let [bx1, by1, bx2, by2] = b.to_corner().coords;
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn fraction(values: &[f64], pass: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| pass(v)).count() as f64 / values.len() as f64
}

/// Fraction of frames with IoU strictly above each threshold.
pub fn success_curve(ious: &[f64]) -> Result<Vec<(f64, f64)>> {
    if ious.is_empty() {
        return Err(Error::Empty("IoU list"));
    }
    Ok(success_thresholds()
        .into_iter()
        .map(|t| (t, fraction(ious, |v| v > t)))
        .collect())
}

pub fn success_auc(ious: &[f64]) -> Result<f64> {
    let curve = success_curve(ious)?;
    Ok(curve.iter().map(|p| p.1).sum::<f64>() / curve.len() as f64)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!("{a} predictions for {b} ground-truth frames")));
    }
    if a == 0 {
        return Err(Error::Empty("frame list"));
    }
    Ok(())
}

/// Euclidean distances between matching centers.
pub fn center_errors(pred: &[(f64, f64)], gt: &[(f64, f64)]) -> Result<Vec<f64>> {
    check_lengths(pred.len(), gt.len())?;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| ((p.0 - g.0).powi(2) + (p.1 - g.1).powi(2)).sqrt())
        .collect())
}

/// Fraction of frames whose center error is at most `threshold_px`.
pub fn precision_score(pred: &[(f64, f64)], gt: &[(f64, f64)], threshold_px: f64) -> Result<f64> {
    let e = center_errors(pred, gt)?;
    Ok(fraction(&e, |v| v <= threshold_px))
}

/// Center error in units of the ground-truth width and height.
pub fn normalized_errors(pred: &[BBox], gt: &[BBox]) -> Result<Vec<f64>> {
    check_lengths(pred.len(), gt.len())?;
    pred.iter()
        .zip(gt)
        .map(|(p, g)| {
            let (w, h) = (g.width(), g.height());
            if !(w > 0.0 && h > 0.0) {
                return Err(Error::InvalidBox(format!("ground truth {:?} has no area", g.xywh())));
            }
            let (pc, gc) = (p.center_point(), g.center_point());
            Ok((((pc.0 - gc.0) / w).powi(2) + ((pc.1 - gc.1) / h).powi(2)).sqrt())
        })
        .collect()
}

pub fn normalized_precision(pred: &[BBox], gt: &[BBox]) -> Result<f64> {
    let e = normalized_errors(pred, gt)?;
    let ts = norm_precision_thresholds();
    Ok(ts.iter().map(|&t| fraction(&e, |v| v <= t)).sum::<f64>() / ts.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub name: String,
    pub attributes: Vec<String>,
    pub frames: usize,
    pub success_auc: f64,
    pub precision: f64,
    pub normalized_precision: f64,
    pub mean_iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub sequences: usize,
    pub success_auc: f64,
    pub precision: f64,
    pub normalized_precision: f64,
}

/// Overall scores are means of the per-sequence scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub success_auc: f64,
    pub precision: f64,
    pub normalized_precision: f64,
    pub precision_threshold_px: f64,
    /// Mean over sequences of the success curve.
    pub success_curve: Vec<(f64, f64)>,
    pub sequences: Vec<SequenceScore>,
    pub attributes: BTreeMap<String, AttributeScore>,
}

/// Predictions and ground truth of one video.
pub struct SequenceResult<'a> {
    pub name: &'a str,
    pub attributes: Vec<String>,
    pub pred: &'a [BBox],
    pub gt: &'a [BBox],
}

pub fn score_sequence(r: &SequenceResult<'_>, threshold_px: f64) -> Result<SequenceScore> {
    check_lengths(r.pred.len(), r.gt.len())?;
    let ious: Vec<f64> = r.pred.iter().zip(r.gt).map(|(p, g)| iou(p, g)).collect();
    let centers = |bs: &[BBox]| bs.iter().map(|b| b.center_point()).collect::<Vec<_>>();
    Ok(SequenceScore {
        name: r.name.to_string(),
        attributes: r.attributes.clone(),
        frames: r.pred.len(),
        success_auc: success_auc(&ious)?,
        precision: precision_score(&centers(r.pred), &centers(r.gt), threshold_px)?,
        normalized_precision: normalized_precision(r.pred, r.gt)?,
        mean_iou: ious.iter().sum::<f64>() / ious.len() as f64,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn evaluate(results: &[SequenceResult<'_>], threshold_px: f64) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let sequences = results
        .iter()
        .map(|r| score_sequence(r, threshold_px))
        .collect::<Result<Vec<_>>>()?;
    let mut curve: Vec<(f64, f64)> = success_thresholds().into_iter().map(|t| (t, 0.0)).collect();
    for r in results {
        let ious: Vec<f64> = r.pred.iter().zip(r.gt).map(|(p, g)| iou(p, g)).collect();
        for (acc, (_, v)) in curve.iter_mut().zip(success_curve(&ious)?) {
            acc.1 += v / results.len() as f64;
        }
    }
    let mut attributes = BTreeMap::new();
    let mut names: Vec<&String> = sequences.iter().flat_map(|s| &s.attributes).collect();
    names.sort();
    names.dedup();
    for a in names {
        let members: Vec<&SequenceScore> = sequences.iter().filter(|s| s.attributes.contains(a)).collect();
        attributes.insert(
            a.clone(),
            AttributeScore {
                sequences: members.len(),
                success_auc: mean(members.iter().map(|s| s.success_auc)),
                precision: mean(members.iter().map(|s| s.precision)),
                normalized_precision: mean(members.iter().map(|s| s.normalized_precision)),
            },
        );
    }
    Ok(MetricsReport {
        success_auc: mean(sequences.iter().map(|s| s.success_auc)),
        precision: mean(sequences.iter().map(|s| s.precision)),
        normalized_precision: mean(sequences.iter().map(|s| s.normalized_precision)),
        precision_threshold_px: threshold_px,
        success_curve: curve,
        sequences,
        attributes,
    })
}

impl MetricsReport {
    /// Writes `report.json` and `curves.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        let mut csv = String::from("threshold,success_rate\n");
        for (t, v) in &self.success_curve {
            csv.push_str(&format!("{t},{v}\n"));
        }
        fs::write(dir.join("curves.csv"), csv)?;
        Ok(())
    }
}
