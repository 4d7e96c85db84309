//! Instantaneous-motion metrics: moving-object Jaccard, false-positive count
//! and mean temporal IoU.
//!
//! Predicted tracks are paired one-to-one with ground-truth objects for the
//! whole sequence. The pairing maximizes summed per-frame J over frames where
//! both sides are flagged moving, falling back to all frames when no pair ever
//! co-moves with any overlap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{content_order, MotionSequence};
use crate::assignment::{max_assignment, ScoreMatrix};
use crate::error::{Error, Result};
use crate::mask::iou;

pub const DEFAULT_FP_FLOOR: f64 = 0.5;

/// Mask-quality thresholds `k ∈ {0.5, 0.55, …, 0.95}`.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MosiConfig {
    /// J below which a moving prediction counts as a false positive against every moving GT object.
    pub fp_floor: f64,
    /// Sweep for temporal IoU; a paired entry passes threshold `k` when `J > k`.
    pub thresholds: Vec<f64>,
}

impl Default for MosiConfig {
    fn default() -> Self {
        Self {
            fp_floor: DEFAULT_FP_FLOOR,
            thresholds: default_thresholds(),
        }
    }
}

impl MosiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fp_floor) {
            return Err(Error::InvalidInput(format!(
                "fp floor {} outside [0, 1]",
                self.fp_floor
            )));
        }
        if self.thresholds.is_empty() {
            return Err(Error::InvalidInput("empty tIoU threshold sweep".into()));
        }
        if let Some(k) = self.thresholds.iter().find(|k| !(0.0..=1.0).contains(*k)) {
            return Err(Error::InvalidInput(format!("tIoU threshold {k} outside [0, 1]")));
        }
        Ok(())
    }
}

/// One-to-one `(gt id, predicted id)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(u32, u32)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiouEntry {
    pub k: f64,
    pub tiou: f64,
}

/// Per-sequence report. `j_mov` and `mt_iou` are percentages; `fp_count` is objects per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosiReport {
    /// `None` when no ground-truth object ever moves.
    pub j_mov: Option<f64>,
    pub fp_count: f64,
    pub mt_iou: f64,
    pub tiou: Vec<TiouEntry>,
    /// Per ground-truth object J over its moving frames, in percent.
    pub per_object: BTreeMap<u32, f64>,
}

struct Side<'a> {
    id: u32,
    moving: &'a [bool],
}

/// Precomputed per-frame J between every ground-truth and predicted track.
struct Table<'a> {
    gt: Vec<Side<'a>>,
    /// Predicted tracks in content order.
    pred: Vec<Side<'a>>,
    /// `j[g][p][t]`.
    j: Vec<Vec<Vec<f64>>>,
    frames: usize,
}

impl<'a> Table<'a> {
    fn build(pred: &'a MotionSequence, gt: &'a MotionSequence) -> Result<Self> {
        pred.tracks().check_same_frames(gt.tracks())?;
        let gt_sides: Vec<_> = gt
            .moving()
            .iter()
            .map(|(&id, f)| Side {
                id,
                moving: f.as_slice(),
            })
            .collect();
        let entries: Vec<_> = pred
            .tracks()
            .objects()
            .iter()
            .map(|(&id, m)| (id, m.as_slice(), Some(pred.moving()[&id].as_slice())))
            .collect();
        let order = content_order(&entries);
        let pred_sides: Vec<_> = order
            .iter()
            .map(|&i| Side {
                id: entries[i].0,
                moving: entries[i].2.expect("flags present"),
            })
            .collect();
        let mut j = Vec::with_capacity(gt_sides.len());
        for g in &gt_sides {
            let gm = &gt.tracks().objects()[&g.id];
            let row = pred_sides
                .iter()
                .map(|p| {
                    let pm = &pred.tracks().objects()[&p.id];
                    pm.iter().zip(gm).map(|(a, b)| iou(a, b)).collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            j.push(row);
        }
        Ok(Self {
            gt: gt_sides,
            pred: pred_sides,
            j,
            frames: gt.frames().len(),
        })
    }

    /// Index pairs `(g, p)` into `self.gt` / `self.pred`.
    fn associate(&self) -> Result<Vec<(usize, usize)>> {
        let (ng, np) = (self.gt.len(), self.pred.len());
        let co_moving = ScoreMatrix::from_fn(ng, np, |g, p| {
            (0..self.frames)
                .filter(|&t| self.gt[g].moving[t] && self.pred[p].moving[t])
                .map(|t| self.j[g][p][t])
                .sum()
        })?;
        let all_zero = (0..ng).all(|g| (0..np).all(|p| co_moving.get(g, p) == 0.0));
        let scores = if all_zero {
            ScoreMatrix::from_fn(ng, np, |g, p| self.j[g][p].iter().sum())?
        } else {
            co_moving
        };
        Ok(max_assignment(&scores).pairs)
    }

    fn index_pairs(&self, pairing: &Pairing) -> Result<Vec<(usize, usize)>> {
        pairing
            .pairs
            .iter()
            .map(|&(gid, pid)| {
                let g = self.gt.iter().position(|s| s.id == gid);
                let p = self.pred.iter().position(|s| s.id == pid);
                g.zip(p)
                    .ok_or_else(|| Error::InvalidInput(format!("pairing ({gid}, {pid}) references unknown tracks")))
            })
            .collect()
    }

    fn j_mov(&self, pairs: &[(usize, usize)]) -> (Option<f64>, BTreeMap<u32, f64>) {
        let partner: BTreeMap<usize, usize> = pairs.iter().copied().collect();
        let mut per_object = BTreeMap::new();
        for (g, side) in self.gt.iter().enumerate() {
            let moving: Vec<usize> = (0..self.frames).filter(|&t| side.moving[t]).collect();
            if moving.is_empty() {
                continue;
            }
            // A track flagged static at t predicts "not moving", i.e. an empty
            // instantaneous mask, which scores 0 against a moving object.
            let total: f64 = match partner.get(&g) {
                Some(&p) => moving
                    .iter()
                    .filter(|&&t| self.pred[p].moving[t])
                    .map(|&t| self.j[g][p][t])
                    .sum(),
                None => 0.0,
            };
            per_object.insert(side.id, total / moving.len() as f64 * 100.0);
        }
        let mean = (!per_object.is_empty()).then(|| per_object.values().sum::<f64>() / per_object.len() as f64);
        (mean, per_object)
    }

    fn fp_count(&self, fp_floor: f64) -> f64 {
        let mut fps = 0usize;
        for (p, side) in self.pred.iter().enumerate() {
            for t in (0..self.frames).filter(|&t| side.moving[t]) {
                let explained = self
                    .gt
                    .iter()
                    .enumerate()
                    .any(|(g, gs)| gs.moving[t] && self.j[g][p][t] >= fp_floor);
                if !explained {
                    fps += 1;
                }
            }
        }
        fps as f64 / self.frames as f64
    }

    fn tiou(&self, pairs: &[(usize, usize)], thresholds: &[f64]) -> Vec<TiouEntry> {
        let count = |flags: &[bool]| flags.iter().filter(|&&f| f).count();
        let mut union = 0usize;
        let mut paired_gt = vec![false; self.gt.len()];
        let mut paired_pred = vec![false; self.pred.len()];
        // J of every co-moving paired entry; the intersection at k counts those above k.
        let mut co_moving = Vec::new();
        for &(g, p) in pairs {
            paired_gt[g] = true;
            paired_pred[p] = true;
            for t in 0..self.frames {
                let (a, b) = (self.gt[g].moving[t], self.pred[p].moving[t]);
                if a || b {
                    union += 1;
                }
                if a && b {
                    co_moving.push(self.j[g][p][t]);
                }
            }
        }
        union += self
            .gt
            .iter()
            .zip(&paired_gt)
            .filter(|(_, &paired)| !paired)
            .map(|(s, _)| count(s.moving))
            .sum::<usize>();
        union += self
            .pred
            .iter()
            .zip(&paired_pred)
            .filter(|(_, &paired)| !paired)
            .map(|(s, _)| count(s.moving))
            .sum::<usize>();
        thresholds
            .iter()
            .map(|&k| {
                let tiou = if union == 0 {
                    1.0
                } else {
                    co_moving.iter().filter(|&&j| j > k).count() as f64 / union as f64
                };
                TiouEntry { k, tiou }
            })
            .collect()
    }

    fn to_pairing(&self, pairs: &[(usize, usize)]) -> Pairing {
        Pairing {
            pairs: pairs.iter().map(|&(g, p)| (self.gt[g].id, self.pred[p].id)).collect(),
        }
    }
}

/// Sequence-level one-to-one association between predicted and ground-truth tracks.
pub fn associate(pred: &MotionSequence, gt: &MotionSequence) -> Result<Pairing> {
    let table = Table::build(pred, gt)?;
    let pairs = table.associate()?;
    Ok(table.to_pairing(&pairs))
}

/// Mean J over each object's moving frames, averaged over objects, in percent.
/// Objects that never move are skipped; `None` if none move.
pub fn j_mov(pred: &MotionSequence, gt: &MotionSequence, pairing: &Pairing) -> Result<Option<f64>> {
    let table = Table::build(pred, gt)?;
    let pairs = table.index_pairs(pairing)?;
    Ok(table.j_mov(&pairs).0)
}

/// Predicted moving entries that match no moving ground-truth object with
/// `J ≥ fp_floor`, per frame.
pub fn fp_count(pred: &MotionSequence, gt: &MotionSequence, fp_floor: f64) -> Result<f64> {
    let table = Table::build(pred, gt)?;
    Ok(table.fp_count(fp_floor))
}

/// Mean temporal IoU in percent, plus the per-threshold table.
pub fn mt_iou(
    pred: &MotionSequence,
    gt: &MotionSequence,
    pairing: &Pairing,
    thresholds: &[f64],
) -> Result<(f64, Vec<TiouEntry>)> {
    let table = Table::build(pred, gt)?;
    let pairs = table.index_pairs(pairing)?;
    let entries = table.tiou(&pairs, thresholds);
    Ok((mean_percent(&entries), entries))
}

fn mean_percent(entries: &[TiouEntry]) -> f64 {
    entries.iter().map(|e| e.tiou).sum::<f64>() / entries.len() as f64 * 100.0
}

pub fn eval_mosi(pred: &MotionSequence, gt: &MotionSequence, cfg: &MosiConfig) -> Result<MosiReport> {
    cfg.validate()?;
    let table = Table::build(pred, gt)?;
    let pairs = table.associate()?;
    let (j_mov, per_object) = table.j_mov(&pairs);
    let tiou = table.tiou(&pairs, &cfg.thresholds);
    Ok(MosiReport {
        j_mov,
        fp_count: table.fp_count(cfg.fp_floor),
        mt_iou: mean_percent(&tiou),
        tiou,
        per_object,
    })
}
