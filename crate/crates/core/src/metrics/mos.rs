//! Region similarity J, contour accuracy F and detection success rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{content_order, SequencePrediction, TrackRef};
use crate::assignment::{max_assignment, ScoreMatrix};
use crate::error::{Error, Result};
use crate::mask::{boundary, box_iou, dilate, intersection_area, iou, tight_bbox, BBox, BinaryMask};

/// `{0.5, 0.55, …, 0.9}`.
pub const DEFAULT_SR_THRESHOLDS: [f64; 9] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9];

/// Boundary tolerance in pixels: `ceil(0.008 · diagonal)`.
pub fn default_tolerance(height: usize, width: usize) -> usize {
    let diag = ((height * height + width * width) as f64).sqrt();
    (0.008 * diag).ceil() as usize
}

/// Boundary F-measure with a Chebyshev tolerance of `tol` pixels.
///
/// Both boundaries empty scores 1; exactly one empty scores 0.
pub fn contour_f(pred: &BinaryMask, gt: &BinaryMask, tol: usize) -> Result<f64> {
    pred.same_dims(gt)?;
    let bp = boundary(pred);
    let bg = boundary(gt);
    let (np, ng) = (bp.area(), bg.area());
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    if np == 0 || ng == 0 {
        return Ok(0.0);
    }
    let precision = intersection_area(&bp, &dilate(&bg, tol))? as f64 / np as f64;
    let recall = intersection_area(&bg, &dilate(&bp, tol))? as f64 / ng as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Every object scored separately after identity association.
    #[default]
    MultiObject,
    /// All objects merged into one foreground mask on both sides.
    ForegroundBackground,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MosConfig {
    /// Boundary tolerance; `None` picks [`default_tolerance`] from the frame size.
    pub tolerance: Option<usize>,
    pub mode: EvalMode,
    /// Thresholds for the detection success rate; `None` skips SR.
    pub sr_thresholds: Option<Vec<f64>>,
}

impl Default for MosConfig {
    fn default() -> Self {
        Self {
            tolerance: None,
            mode: EvalMode::MultiObject,
            sr_thresholds: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectScores {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

/// Per-sequence MOS scores, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosReport {
    /// Mean over ground-truth objects; `None` when the sequence has no objects.
    #[serde(rename = "J")]
    pub j: Option<f64>,
    #[serde(rename = "F")]
    pub f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sr: Option<f64>,
    pub per_object: BTreeMap<u32, ObjectScores>,
}

/// Scores a prediction against ground truth with sequence-level identity association.
pub fn eval_mos(pred: &SequencePrediction, gt: &SequencePrediction, cfg: &MosConfig) -> Result<MosReport> {
    pred.check_same_frames(gt)?;
    let sr = match &cfg.sr_thresholds {
        Some(thresholds) => {
            let gt_boxes: Vec<Option<BBox>> = gt.merged_frames().iter().map(tight_bbox).collect();
            Some(detection_sr(pred, &gt_boxes, thresholds)? * 100.0)
        }
        None => None,
    };
    let (pred, gt) = match cfg.mode {
        EvalMode::MultiObject => (pred.clone(), gt.clone()),
        EvalMode::ForegroundBackground => (pred.merged(), gt.merged()),
    };
    let (h, w) = gt.dims();
    let tol = cfg.tolerance.unwrap_or_else(|| default_tolerance(h, w));
    let n_frames = gt.len();

    let gt_tracks: Vec<(u32, &[BinaryMask])> = gt.objects().iter().map(|(&id, m)| (id, m.as_slice())).collect();
    let pred_entries: Vec<TrackRef<'_>> = pred.objects().iter().map(|(&id, m)| (id, m.as_slice(), None)).collect();
    let pred_order = content_order(&pred_entries);

    // Per-frame J for every (gt, pred) pair, pred columns in content order.
    let mut frame_j = vec![vec![Vec::new(); pred_order.len()]; gt_tracks.len()];
    for (g, (_, gm)) in gt_tracks.iter().enumerate() {
        for (col, &p) in pred_order.iter().enumerate() {
            let pm = pred_entries[p].1;
            frame_j[g][col] = gm.iter().zip(pm).map(|(a, b)| iou(b, a)).collect::<Result<Vec<_>>>()?;
        }
    }
    let scores = ScoreMatrix::from_fn(gt_tracks.len(), pred_order.len(), |g, c| frame_j[g][c].iter().sum())?;
    let pairing = max_assignment(&scores);
    let matched: BTreeMap<usize, usize> = pairing.pairs.iter().copied().collect();

    let mut per_object = BTreeMap::new();
    for (g, (id, gm)) in gt_tracks.iter().enumerate() {
        let scores = match matched.get(&g) {
            Some(&col) => {
                let pm = pred_entries[pred_order[col]].1;
                let j = frame_j[g][col].iter().sum::<f64>() / n_frames as f64;
                let f = gm
                    .iter()
                    .zip(pm)
                    .map(|(a, b)| contour_f(b, a, tol))
                    .sum::<Result<f64>>()?
                    / n_frames as f64;
                ObjectScores {
                    j: j * 100.0,
                    f: f * 100.0,
                }
            }
            None => ObjectScores { j: 0.0, f: 0.0 },
        };
        per_object.insert(*id, scores);
    }
    let mean = |get: fn(&ObjectScores) -> f64| {
        (!per_object.is_empty()).then(|| per_object.values().map(get).sum::<f64>() / per_object.len() as f64)
    };
    Ok(MosReport {
        j: mean(|s| s.j),
        f: mean(|s| s.f),
        sr,
        per_object,
    })
}

/// Mean over `thresholds` of the fraction of frames whose merged predicted box
/// reaches box-IoU ≥ τ with the ground-truth box.
///
/// A frame without a ground-truth box counts as a success only when nothing is
/// predicted either.
pub fn detection_sr(pred: &SequencePrediction, gt_boxes: &[Option<BBox>], thresholds: &[f64]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("empty SR threshold set".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::InvalidInput(format!("SR threshold {t} outside (0, 1)")));
    }
    if gt_boxes.len() != pred.len() {
        return Err(Error::FrameMismatch(format!(
            "{} ground-truth boxes for {} frames",
            gt_boxes.len(),
            pred.len()
        )));
    }
    let overlaps: Vec<Option<f64>> = pred
        .merged_frames()
        .iter()
        .zip(gt_boxes)
        .map(|(m, gt)| match (tight_bbox(m), gt) {
            (Some(p), Some(g)) => Some(box_iou(&p, g)),
            (None, None) => Some(1.0),
            _ => None,
        })
        .collect();
    let n = overlaps.len() as f64;
    let sr_sum: f64 = thresholds
        .iter()
        .map(|&t| overlaps.iter().filter(|o| o.is_some_and(|v| v >= t)).count() as f64 / n)
        .sum();
    Ok(sr_sum / thresholds.len() as f64)
}
