//! Brute-force reference implementations and the self-check suite.
//!
//! Everything here is deliberately naive: exhaustive enumeration, per-pixel
//! loops, materialized indicator tensors. These functions share no code path
//! with the optimized implementations they check.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assignment::{max_assignment, Assignment, ScoreMatrix};
use crate::error::Result;
use crate::mask::{decode_rle, encode_rle, BinaryMask, LabelMap};
use crate::metrics::{
    associate, default_thresholds, fp_count, mt_iou, MotionSequence, Pairing, SequencePrediction, DEFAULT_FP_FLOOR,
    SCHEMA_VERSION,
};
use crate::objectives::{
    composite_loss_grad, frame_loss_grad, grad_check, grad_check_fn, random_sample, rescale_confidence,
    FrameLossConfig, LossConfig,
};

/// Exhaustive search over all matchings of size `min(rows, cols)`.
///
/// Matchings are enumerated in lexicographic order of their row-sorted pair
/// lists; the first one whose total is within the documented tie tolerance of
/// the maximum is returned.
pub fn brute_force_assignment(s: &ScoreMatrix) -> Assignment {
    let (rows, cols) = (s.rows(), s.cols());
    let target = rows.min(cols);
    let max_abs = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .fold(0.0f64, |m, (r, c)| m.max(s.get(r, c).abs()));
    let tol = 1e-9 * (max_abs * target as f64).max(1.0);

    let mut all: Vec<(f64, Vec<(usize, usize)>)> = Vec::new();
    let mut current = Vec::with_capacity(target);
    let mut used = vec![false; cols];

    fn walk(
        s: &ScoreMatrix,
        start_row: usize,
        target: usize,
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        all: &mut Vec<(f64, Vec<(usize, usize)>)>,
    ) {
        if current.len() == target {
            let total: f64 = current.iter().map(|&(r, c)| s.get(r, c)).sum();
            all.push((total, current.clone()));
            return;
        }
        let need = target - current.len();
        for r in start_row..s.rows() {
            if s.rows() - r < need {
                break;
            }
            for c in 0..s.cols() {
                if used[c] {
                    continue;
                }
                used[c] = true;
                current.push((r, c));
                walk(s, r + 1, target, used, current, all);
                current.pop();
                used[c] = false;
            }
        }
    }

    walk(s, 0, target, &mut used, &mut current, &mut all);
    let max = all.iter().map(|(t, _)| *t).fold(f64::NEG_INFINITY, f64::max);
    let pairs = all
        .into_iter()
        .find(|(t, _)| *t >= max - tol)
        .map(|(_, p)| p)
        .unwrap_or_default();
    let total = pairs.iter().map(|&(r, c)| s.get(r, c)).sum();
    Assignment { pairs, total }
}

/// IoU by visiting every pixel; two empty masks score 1.
pub fn pixel_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (h, w) = a.dims();
    let (mut inter, mut union) = (0u64, 0u64);
    for r in 0..h {
        for c in 0..w {
            let (x, y) = (a.get(r, c), b.get(r, c));
            inter += u64::from(x && y);
            union += u64::from(x || y);
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Summed pixel IoU of one track pair, over co-moving frames or all frames.
pub fn association_score(pred: &MotionSequence, gt: &MotionSequence, g: u32, p: u32, co_moving_only: bool) -> f64 {
    (0..gt.frames().len())
        .filter(|&t| !co_moving_only || (gt.moving()[&g][t] && pred.moving()[&p][t]))
        .map(|t| pixel_iou(&pred.tracks().objects()[&p][t], &gt.tracks().objects()[&g][t]))
        .sum()
}

/// Optimal association total by exhaustive search, and whether co-moving
/// scores were used (they are replaced by all-frame scores when all zero).
pub fn brute_force_association(pred: &MotionSequence, gt: &MotionSequence) -> Result<(f64, bool)> {
    let gts: Vec<u32> = gt.moving().keys().copied().collect();
    let preds: Vec<u32> = pred.moving().keys().copied().collect();
    let co = ScoreMatrix::from_fn(gts.len(), preds.len(), |g, p| {
        association_score(pred, gt, gts[g], preds[p], true)
    })?;
    let all_zero = (0..gts.len()).all(|g| (0..preds.len()).all(|p| co.get(g, p) == 0.0));
    if all_zero {
        let all = ScoreMatrix::from_fn(gts.len(), preds.len(), |g, p| {
            association_score(pred, gt, gts[g], preds[p], false)
        })?;
        Ok((brute_force_assignment(&all).total, false))
    } else {
        Ok((brute_force_assignment(&co).total, true))
    }
}

/// mtIoU from an explicit `(slot, frame, k)` indicator tensor.
///
/// Slots are the paired tracks, then unpaired ground truth, then unpaired
/// predictions. `U[slot][t]` is set when either side moves; `I[slot][t][k]`
/// when both move on a paired slot with pixel IoU strictly above `k`.
/// Returns the mean in percent and the per-threshold ratios.
pub fn brute_force_mt_iou(
    pred: &MotionSequence,
    gt: &MotionSequence,
    pairing: &Pairing,
    thresholds: &[f64],
) -> (f64, Vec<f64>) {
    let n = gt.frames().len();
    let never = vec![false; n];
    let mut slots: Vec<(Option<u32>, Option<u32>)> = pairing.pairs.iter().map(|&(g, p)| (Some(g), Some(p))).collect();
    for &g in gt.moving().keys() {
        if !pairing.pairs.iter().any(|&(pg, _)| pg == g) {
            slots.push((Some(g), None));
        }
    }
    for &p in pred.moving().keys() {
        if !pairing.pairs.iter().any(|&(_, pp)| pp == p) {
            slots.push((None, Some(p)));
        }
    }
    let mut union = vec![vec![false; n]; slots.len()];
    let mut inter = vec![vec![vec![false; thresholds.len()]; n]; slots.len()];
    for (s, &(g, p)) in slots.iter().enumerate() {
        let gm = g.map_or(&never, |g| &gt.moving()[&g]);
        let pm = p.map_or(&never, |p| &pred.moving()[&p]);
        for t in 0..n {
            union[s][t] = gm[t] || pm[t];
            if let (Some(g), Some(p)) = (g, p) {
                if gm[t] && pm[t] {
                    let j = pixel_iou(&pred.tracks().objects()[&p][t], &gt.tracks().objects()[&g][t]);
                    for (k, &th) in thresholds.iter().enumerate() {
                        inter[s][t][k] = j > th;
                    }
                }
            }
        }
    }
    let u: usize = union.iter().flatten().filter(|&&x| x).count();
    let per_k: Vec<f64> = (0..thresholds.len())
        .map(|k| {
            if u == 0 {
                1.0
            } else {
                let i = inter.iter().flatten().filter(|row| row[k]).count();
                i as f64 / u as f64
            }
        })
        .collect();
    let mean = per_k.iter().sum::<f64>() / per_k.len() as f64 * 100.0;
    (mean, per_k)
}

/// False-positive rate by direct enumeration of predicted moving entries.
pub fn brute_force_fp_count(pred: &MotionSequence, gt: &MotionSequence, fp_floor: f64) -> f64 {
    let n = gt.frames().len();
    let mut fps = 0usize;
    for (&p, pm) in pred.moving() {
        for t in (0..n).filter(|&t| pm[t]) {
            let explained = gt.moving().iter().any(|(&g, gm)| {
                gm[t] && pixel_iou(&pred.tracks().objects()[&p][t], &gt.tracks().objects()[&g][t]) >= fp_floor
            });
            fps += usize::from(!explained);
        }
    }
    fps as f64 / n as f64
}

fn random_mask(rng: &mut impl Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |_, _| rng.random_bool(density)).expect("nonzero dims")
}

/// A random ground-truth / prediction pair for oracle comparisons.
///
/// Ground-truth objects are disjoint; predictions are noisy copies of ground
/// truth, shuffled in id, plus occasional spurious tracks, so per-frame IoU
/// values spread across the threshold grid.
pub fn random_motion_pair(rng: &mut impl Rng) -> (MotionSequence, MotionSequence) {
    let dims = (rng.random_range(3..9), rng.random_range(3..9));
    random_motion_pair_sized(rng, dims, 6, 3)
}

/// [`random_motion_pair`] on a fixed canvas with up to `max_frames` frames and
/// `max_objects` ground-truth objects.
pub fn random_motion_pair_sized(
    rng: &mut impl Rng,
    (h, w): (usize, usize),
    max_frames: usize,
    max_objects: usize,
) -> (MotionSequence, MotionSequence) {
    let n = rng.random_range(1..=max_frames);
    let n_gt = rng.random_range(0..=max_objects);
    let frames: Vec<usize> = (0..n).collect();

    let mut gt_masks: BTreeMap<u32, Vec<BinaryMask>> = (1..=n_gt as u32).map(|id| (id, Vec::new())).collect();
    for _ in 0..n {
        let labels: Vec<u8> = (0..h * w).map(|_| rng.random_range(0..=n_gt as u8)).collect();
        let map = LabelMap::from_raw(h, w, labels).expect("valid labels");
        for (id, track) in gt_masks.iter_mut() {
            track.push(map.extract(*id as u8));
        }
    }
    let flags = |masks: &BTreeMap<u32, Vec<BinaryMask>>, rng: &mut dyn rand::RngCore| -> BTreeMap<u32, Vec<bool>> {
        masks
            .iter()
            .map(|(&id, track)| {
                (
                    id,
                    track.iter().map(|m| !m.is_empty() && rng.random_bool(0.7)).collect(),
                )
            })
            .collect()
    };
    let gt_moving = flags(&gt_masks, rng);

    let mut pred_masks = BTreeMap::new();
    let mut next = rng.random_range(1..50u32);
    for track in gt_masks.values() {
        if rng.random_bool(0.2) {
            continue;
        }
        let flip = rng.random_range(0.0..0.3);
        let noisy = track
            .iter()
            .map(|m| {
                let noise = random_mask(rng, h, w, flip);
                BinaryMask::from_fn(h, w, |r, c| m.get(r, c) ^ noise.get(r, c)).expect("dims")
            })
            .collect();
        pred_masks.insert(next, noisy);
        next += rng.random_range(1..5);
    }
    for _ in 0..rng.random_range(0..3) {
        let d = rng.random_range(0.1..0.6);
        pred_masks.insert(next, (0..n).map(|_| random_mask(rng, h, w, d)).collect());
        next += rng.random_range(1..5);
    }
    let pred_moving = flags(&pred_masks, rng);

    let gt = MotionSequence::ground_truth(
        SequencePrediction::new(frames.clone(), (h, w), gt_masks).expect("valid"),
        gt_moving,
    )
    .expect("valid ground truth");
    let pred = MotionSequence::new(
        SequencePrediction::new(frames, (h, w), pred_masks).expect("valid"),
        pred_moving,
    )
    .expect("valid prediction");
    (pred, gt)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfCheckReport {
    pub schema_version: u32,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        detail,
    }
}

/// Gradient tolerance of the self-check suite.
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Worst gradient error of both loss functions over `samples` random samples.
pub fn gradient_suite(rng: &mut impl Rng, samples: usize) -> Result<f64> {
    let cfg = LossConfig::default();
    let fcfg = FrameLossConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let pixels = rng.random_range(1..33);
        let s = random_sample(rng, pixels);
        let object = grad_check(|x| composite_loss_grad(x, &cfg).map(|(b, g)| (b.total, g)), &s)?;
        let frame = grad_check(|x| frame_loss_grad(x, &fcfg).map(|(b, g)| (b.total, g)), &s)?;
        worst = worst.max(object).max(frame);
    }
    Ok(worst)
}

/// Gradient checks, oracle equivalence and codec round trips.
pub fn run_selfcheck(seed: u64) -> Result<SelfCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let worst = gradient_suite(&mut rng, 100)?;
    checks.push(check(
        "loss gradients",
        worst < GRAD_TOLERANCE,
        format!("max relative error {worst:.3e} over 100 samples"),
    ));
    let lo = rescale_confidence(0.0, 5.0)?;
    let hi = rescale_confidence(1.0, 5.0)?;
    let slope = grad_check_fn(|x| rescale_confidence(x[0], 5.0).unwrap_or(f64::NAN), &[0.5], &[4.0]);
    checks.push(check(
        "confidence rescale",
        lo == 1.0 && hi == 5.0 && slope < 1e-10,
        format!("endpoints {lo}, {hi}; slope error {slope:.3e}"),
    ));

    let mut mismatches = 0;
    for _ in 0..500 {
        let (r, c) = (rng.random_range(1..8), rng.random_range(1..8));
        let s = ScoreMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))?;
        if max_assignment(&s) != brute_force_assignment(&s) {
            mismatches += 1;
        }
    }
    checks.push(check(
        "assignment vs exhaustive search",
        mismatches == 0,
        format!("{mismatches} of 500 matrices differ"),
    ));

    let (mut bad_assoc, mut bad_tiou, mut bad_fp) = (0, 0, 0);
    let thresholds = default_thresholds();
    for _ in 0..200 {
        let (pred, gt) = random_motion_pair(&mut rng);
        let pairing = associate(&pred, &gt)?;
        let (oracle_total, co_moving) = brute_force_association(&pred, &gt)?;
        let total: f64 = pairing
            .pairs
            .iter()
            .map(|&(g, p)| association_score(&pred, &gt, g, p, co_moving))
            .sum();
        if (total - oracle_total).abs() > 1e-9 * oracle_total.max(1.0) {
            bad_assoc += 1;
        }
        let (mean, _) = mt_iou(&pred, &gt, &pairing, &thresholds)?;
        if mean != brute_force_mt_iou(&pred, &gt, &pairing, &thresholds).0 {
            bad_tiou += 1;
        }
        if fp_count(&pred, &gt, DEFAULT_FP_FLOOR)? != brute_force_fp_count(&pred, &gt, DEFAULT_FP_FLOOR) {
            bad_fp += 1;
        }
    }
    checks.push(check(
        "mtIoU vs indicator tensor",
        bad_tiou == 0 && bad_assoc == 0,
        format!("{bad_tiou} mtIoU and {bad_assoc} association mismatches over 200 sequences"),
    ));
    checks.push(check(
        "false positives vs enumeration",
        bad_fp == 0,
        format!("{bad_fp} mismatches over 200 sequences"),
    ));

    let mut bad_rle = 0;
    for _ in 0..200 {
        let (h, w) = (rng.random_range(1..40), rng.random_range(1..40));
        let d = rng.random_range(0.0..1.0);
        let m = random_mask(&mut rng, h, w, d);
        let rle = encode_rle(&m);
        if decode_rle(&rle.runs, h, w)? != m {
            bad_rle += 1;
        }
    }
    checks.push(check(
        "RLE round trip",
        bad_rle == 0,
        format!("{bad_rle} of 200 masks differ"),
    ));

    Ok(SelfCheckReport {
        schema_version: SCHEMA_VERSION,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
