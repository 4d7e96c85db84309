//! Reference loss functions with analytic gradients.
//!
//! Plain `f64` formulas meant for checking a training implementation, not for
//! training. Every loss comes with a gradient with respect to each scalar input,
//! and [`grad_check`] compares those against central differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-7;
/// Additive smoothing in the dice ratio.
pub const DICE_EPS: f64 = 1e-6;
/// Finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_mask: f64,
    pub lambda_motion: f64,
    pub lambda_iou: f64,
    pub lambda_conf_moving: f64,
    pub lambda_conf_static: f64,
    pub c_max: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    /// The mask loss is `focal_weight * focal + dice_weight * dice`, not
    /// normalized by the weight sum.
    pub focal_weight: f64,
    pub dice_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_mask: 20.0,
            lambda_motion: 1.0,
            lambda_iou: 1.0,
            lambda_conf_moving: 0.1,
            lambda_conf_static: 0.001,
            c_max: 5.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            focal_weight: 20.0,
            dice_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_mask", self.lambda_mask),
            ("lambda_motion", self.lambda_motion),
            ("lambda_iou", self.lambda_iou),
            ("lambda_conf_moving", self.lambda_conf_moving),
            ("lambda_conf_static", self.lambda_conf_static),
            ("focal_weight", self.focal_weight),
            ("dice_weight", self.dice_weight),
            ("focal_gamma", self.focal_gamma),
        ];
        for (name, v) in weights {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        validate_shared(self.c_max, self.focal_alpha)
    }
}

fn validate_shared(c_max: f64, alpha: f64) -> Result<()> {
    if !(c_max.is_finite() && c_max > 1.0) {
        return Err(Error::InvalidInput(format!("c_max must be > 1, got {c_max}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "focal alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Frame-level loss weights; the split confidence regularizer collapses to a
/// single coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameLossConfig {
    pub lambda_mask: f64,
    pub lambda_iou: f64,
    pub lambda_conf: f64,
    pub c_max: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub focal_weight: f64,
    pub dice_weight: f64,
}

impl Default for FrameLossConfig {
    fn default() -> Self {
        Self {
            lambda_mask: 20.0,
            lambda_iou: 1.0,
            lambda_conf: 0.5,
            c_max: 5.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            focal_weight: 20.0,
            dice_weight: 1.0,
        }
    }
}

impl FrameLossConfig {
    /// The object-level config with no motion term and equal confidence
    /// coefficients computes the same value.
    pub fn as_object_level(&self) -> LossConfig {
        LossConfig {
            lambda_mask: self.lambda_mask,
            lambda_motion: 0.0,
            lambda_iou: self.lambda_iou,
            lambda_conf_moving: self.lambda_conf,
            lambda_conf_static: self.lambda_conf,
            c_max: self.c_max,
            focal_alpha: self.focal_alpha,
            focal_gamma: self.focal_gamma,
            focal_weight: self.focal_weight,
            dice_weight: self.dice_weight,
        }
    }
}

/// One query/frame worth of predictions and targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    /// Per-pixel foreground probabilities.
    pub probs: Vec<f64>,
    /// Ground-truth mask, empty when the object is not moving.
    pub target: Vec<bool>,
    pub motion_prob: f64,
    pub moving: bool,
    pub iou_pred: f64,
    pub iou_true: f64,
    pub confidence: f64,
}

impl LossSample {
    /// A query with no ground-truth object is supervised towards "no moving
    /// object": empty target, static, zero IoU.
    pub fn unmatched(probs: Vec<f64>, motion_prob: f64, iou_pred: f64, confidence: f64) -> Self {
        let n = probs.len();
        Self {
            probs,
            target: vec![false; n],
            motion_prob,
            moving: false,
            iou_pred,
            iou_true: 0.0,
            confidence,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.probs.len() != self.target.len() {
            return Err(Error::InvalidInput(format!(
                "probability map has {} pixels, target has {}",
                self.probs.len(),
                self.target.len()
            )));
        }
        if self.probs.is_empty() {
            return Err(Error::InvalidInput("empty probability map".into()));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        for &p in &self.probs {
            unit("probability", p)?;
        }
        unit("motion probability", self.motion_prob)?;
        unit("confidence", self.confidence)?;
        if !self.iou_pred.is_finite() || !self.iou_true.is_finite() {
            return Err(Error::InvalidInput("IoU values must be finite".into()));
        }
        Ok(())
    }

    /// Scalar inputs in gradient order: pixels, then motion probability,
    /// predicted IoU, actual IoU, confidence.
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.probs.clone();
        v.extend([self.motion_prob, self.iou_pred, self.iou_true, self.confidence]);
        v
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        let n = self.probs.len();
        assert_eq!(params.len(), n + 4, "parameter vector length");
        Self {
            probs: params[..n].to_vec(),
            motion_prob: params[n],
            iou_pred: params[n + 1],
            iou_true: params[n + 2],
            confidence: params[n + 3],
            ..self.clone()
        }
    }
}

/// Partial derivatives in the same order as [`LossSample::params`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LossGrad {
    pub probs: Vec<f64>,
    pub motion_prob: f64,
    pub iou_pred: f64,
    pub iou_true: f64,
    pub confidence: f64,
}

impl LossGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.probs.clone();
        v.extend([self.motion_prob, self.iou_pred, self.iou_true, self.confidence]);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub focal: f64,
    pub dice: f64,
    pub mask: f64,
    pub motion: f64,
    pub iou: f64,
    pub rescaled_confidence: f64,
    /// The subtracted `coefficient * ln(c~)` term.
    pub regularizer: f64,
}

fn clamp_prob(p: f64) -> (f64, f64) {
    // Returns the clamped value and d(clamped)/dp.
    if p < PROB_EPS {
        (PROB_EPS, 0.0)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, 0.0)
    } else {
        (p, 1.0)
    }
}

pub fn rescale_confidence(c: f64, c_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidInput(format!("confidence must lie in [0, 1], got {c}")));
    }
    if !(c_max.is_finite() && c_max > 1.0) {
        return Err(Error::InvalidInput(format!("c_max must be > 1, got {c_max}")));
    }
    Ok((c_max - 1.0) * c + 1.0)
}

fn check_shapes(p: &[f64], y: &[bool]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} probabilities vs {} targets",
            p.len(),
            y.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::InvalidInput("empty probability map".into()));
    }
    Ok(())
}

/// Mean focal loss and its per-pixel gradient.
pub fn focal_loss_grad(p: &[f64], y: &[bool], alpha: f64, gamma: f64) -> Result<(f64, Vec<f64>)> {
    check_shapes(p, y)?;
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(y) {
        let (pc, dclamp) = clamp_prob(pi);
        let (pt, sign, at) = if yi {
            (pc, 1.0, alpha)
        } else {
            (1.0 - pc, -1.0, 1.0 - alpha)
        };
        let q = 1.0 - pt;
        let lnp = pt.ln();
        loss += -at * q.powf(gamma) * lnp;
        let mut d = -at * q.powf(gamma) / pt;
        if gamma != 0.0 {
            d += at * gamma * q.powf(gamma - 1.0) * lnp;
        }
        grad.push(d * sign * dclamp / n);
    }
    Ok((loss / n, grad))
}

pub fn focal_loss(p: &[f64], y: &[bool], alpha: f64, gamma: f64) -> Result<f64> {
    focal_loss_grad(p, y, alpha, gamma).map(|(l, _)| l)
}

pub fn dice_loss_grad(p: &[f64], y: &[bool]) -> Result<(f64, Vec<f64>)> {
    check_shapes(p, y)?;
    let (mut spy, mut sp, mut sy) = (0.0, 0.0, 0.0);
    for (&pi, &yi) in p.iter().zip(y) {
        let yv = if yi { 1.0 } else { 0.0 };
        spy += pi * yv;
        sp += pi;
        sy += yv;
    }
    let num = 2.0 * spy + DICE_EPS;
    let den = sp + sy + DICE_EPS;
    let grad = y
        .iter()
        .map(|&yi| {
            let yv = if yi { 1.0 } else { 0.0 };
            -(2.0 * yv * den - num) / (den * den)
        })
        .collect();
    Ok((1.0 - num / den, grad))
}

pub fn dice_loss(p: &[f64], y: &[bool]) -> Result<f64> {
    dice_loss_grad(p, y).map(|(l, _)| l)
}

/// Binary cross-entropy of one probability and its derivative.
pub fn bce_grad(p: f64, y: bool) -> (f64, f64) {
    let (pc, dclamp) = clamp_prob(p);
    if y {
        (-pc.ln(), -dclamp / pc)
    } else {
        (-(1.0 - pc).ln(), dclamp / (1.0 - pc))
    }
}

pub fn bce(p: f64, y: bool) -> f64 {
    bce_grad(p, y).0
}

pub fn mse(pred: f64, actual: f64) -> f64 {
    (pred - actual).powi(2)
}

struct MaskTerm {
    focal: f64,
    dice: f64,
    value: f64,
    grad: Vec<f64>,
}

fn mask_term(s: &LossSample, alpha: f64, gamma: f64, wf: f64, wd: f64) -> Result<MaskTerm> {
    let (focal, gf) = focal_loss_grad(&s.probs, &s.target, alpha, gamma)?;
    let (dice, gd) = dice_loss_grad(&s.probs, &s.target)?;
    let grad = gf.iter().zip(&gd).map(|(a, b)| wf * a + wd * b).collect();
    Ok(MaskTerm {
        focal,
        dice,
        value: wf * focal + wd * dice,
        grad,
    })
}

/// Object-level loss: IoU regression plus confidence-modulated mask and motion
/// terms, minus a motion-dependent log-confidence regularizer.
pub fn composite_loss_grad(s: &LossSample, cfg: &LossConfig) -> Result<(LossBreakdown, LossGrad)> {
    cfg.validate()?;
    s.validate()?;
    let c_tilde = rescale_confidence(s.confidence, cfg.c_max)?;
    let mask = mask_term(s, cfg.focal_alpha, cfg.focal_gamma, cfg.focal_weight, cfg.dice_weight)?;
    let (motion, dmotion) = bce_grad(s.motion_prob, s.moving);
    let iou = mse(s.iou_pred, s.iou_true);
    let kappa = if s.moving {
        cfg.lambda_conf_moving
    } else {
        cfg.lambda_conf_static
    };
    let modulated = cfg.lambda_mask * mask.value + cfg.lambda_motion * motion;
    let regularizer = kappa * c_tilde.ln();
    let total = cfg.lambda_iou * iou + c_tilde * modulated - regularizer;

    let diou = 2.0 * (s.iou_pred - s.iou_true);
    let grad = LossGrad {
        probs: mask.grad.iter().map(|g| c_tilde * cfg.lambda_mask * g).collect(),
        motion_prob: c_tilde * cfg.lambda_motion * dmotion,
        iou_pred: cfg.lambda_iou * diou,
        iou_true: -cfg.lambda_iou * diou,
        confidence: (cfg.c_max - 1.0) * (modulated - kappa / c_tilde),
    };
    let breakdown = LossBreakdown {
        total,
        focal: mask.focal,
        dice: mask.dice,
        mask: mask.value,
        motion,
        iou,
        rescaled_confidence: c_tilde,
        regularizer,
    };
    Ok((breakdown, grad))
}

pub fn composite_loss(s: &LossSample, cfg: &LossConfig) -> Result<LossBreakdown> {
    composite_loss_grad(s, cfg).map(|(b, _)| b)
}

/// Frame-level loss with a single confidence coefficient. Motion fields of
/// the sample are ignored and get zero gradient.
pub fn frame_loss_grad(s: &LossSample, cfg: &FrameLossConfig) -> Result<(LossBreakdown, LossGrad)> {
    validate_shared(cfg.c_max, cfg.focal_alpha)?;
    s.validate()?;
    let c_tilde = rescale_confidence(s.confidence, cfg.c_max)?;
    let mask = mask_term(s, cfg.focal_alpha, cfg.focal_gamma, cfg.focal_weight, cfg.dice_weight)?;
    let iou = mse(s.iou_pred, s.iou_true);
    let regularizer = cfg.lambda_conf * c_tilde.ln();
    let total = cfg.lambda_iou * iou + c_tilde * cfg.lambda_mask * mask.value - regularizer;
    let diou = 2.0 * (s.iou_pred - s.iou_true);
    let grad = LossGrad {
        probs: mask.grad.iter().map(|g| c_tilde * cfg.lambda_mask * g).collect(),
        motion_prob: 0.0,
        iou_pred: cfg.lambda_iou * diou,
        iou_true: -cfg.lambda_iou * diou,
        confidence: (cfg.c_max - 1.0) * (cfg.lambda_mask * mask.value - cfg.lambda_conf / c_tilde),
    };
    let breakdown = LossBreakdown {
        total,
        focal: mask.focal,
        dice: mask.dice,
        mask: mask.value,
        motion: 0.0,
        iou,
        rescaled_confidence: c_tilde,
        regularizer,
    };
    Ok((breakdown, grad))
}

pub fn frame_loss(s: &LossSample, cfg: &FrameLossConfig) -> Result<f64> {
    frame_loss_grad(s, cfg).map(|(b, _)| b.total)
}

/// Rescaled confidence that minimizes the object-level loss with everything
/// else held fixed.
pub fn optimal_rescaled_confidence(s: &LossSample, cfg: &LossConfig) -> Result<f64> {
    let b = composite_loss(s, cfg)?;
    let modulated = cfg.lambda_mask * b.mask + cfg.lambda_motion * b.motion;
    let kappa = if s.moving {
        cfg.lambda_conf_moving
    } else {
        cfg.lambda_conf_static
    };
    let c = if modulated > 0.0 {
        kappa / modulated
    } else {
        f64::INFINITY
    };
    Ok(c.clamp(1.0, cfg.c_max))
}

/// Relative error used by the gradient checks: `|a - n| / max(1, |a|, |n|)`.
///
/// Large partials are compared relatively, tiny ones absolutely, so
/// near-zero derivatives do not turn round-off into spurious failures.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Largest relative error between `grad` and central differences of `f` at `x`.
pub fn grad_check_fn(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) -> f64 {
    assert_eq!(x.len(), grad.len(), "gradient length");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    worst
}

/// Checks every partial of a sample-level loss against central differences.
///
/// The sample should sit in the interior of the clamped region so that no
/// probe step crosses a clamp boundary.
pub fn grad_check<F>(loss: F, sample: &LossSample) -> Result<f64>
where
    F: Fn(&LossSample) -> Result<(f64, LossGrad)>,
{
    let (_, grad) = loss(sample)?;
    let x = sample.params();
    let f = |p: &[f64]| loss(&sample.with_params(p)).map(|(v, _)| v).unwrap_or(f64::NAN);
    Ok(grad_check_fn(f, &x, &grad.flatten()))
}

/// Random sample with every probability inside `[0.02, 0.98]`.
pub fn random_sample(rng: &mut impl rand::Rng, pixels: usize) -> LossSample {
    let probs = (0..pixels).map(|_| rng.random_range(0.02..0.98)).collect();
    let moving = rng.random_bool(0.5);
    let target = (0..pixels).map(|_| moving && rng.random_bool(0.4)).collect();
    LossSample {
        probs,
        target,
        motion_prob: rng.random_range(0.02..0.98),
        moving,
        iou_pred: rng.random_range(0.0..1.0),
        iou_true: rng.random_range(0.0..1.0),
        confidence: rng.random_range(0.02..0.98),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rescale_endpoints() {
        assert_eq!(rescale_confidence(0.0, 5.0).unwrap(), 1.0);
        assert_eq!(rescale_confidence(1.0, 5.0).unwrap(), 5.0);
        assert_eq!(rescale_confidence(0.5, 5.0).unwrap(), 3.0);
        assert!(rescale_confidence(1.1, 5.0).is_err());
        assert!(rescale_confidence(0.5, 1.0).is_err());
        let err = grad_check_fn(|x| rescale_confidence(x[0], 5.0).unwrap(), &[0.3], &[4.0]);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn component_values() {
        let f = focal_loss(&[0.5], &[true], 0.25, 2.0).unwrap();
        assert!(close(f, 0.25 * 0.25 * 2f64.ln(), 1e-15));
        assert!(close(f, 0.043322, 1e-6));

        let n = 1000;
        let d = dice_loss(&vec![0.5; n], &vec![true; n]).unwrap();
        assert!(close(d, 1.0 / 3.0, 1e-9));

        let y = [true, false, true, false];
        let p = [1.0, 0.0, 1.0, 0.0];
        assert!(focal_loss(&p, &y, 0.25, 2.0).unwrap() < 1e-20);
        assert!(dice_loss(&p, &y).unwrap().abs() < 1e-12);
        assert!(close(bce(0.25, true), 4f64.ln(), 1e-15));
        assert_eq!(mse(0.75, 0.25), 0.25);
        assert!(focal_loss(&p, &y[..3], 0.25, 2.0).is_err());
    }

    #[test]
    fn focal_without_focusing_is_weighted_bce() {
        let p = [0.2, 0.7, 0.9, 0.4];
        let y = [true, false, true, true];
        let (l, g) = focal_loss_grad(&p, &y, 0.25, 0.0).unwrap();
        let mut expect = 0.0;
        for i in 0..4 {
            let w = if y[i] { 0.25 } else { 0.75 };
            expect += w * bce(p[i], y[i]);
            let (_, d) = bce_grad(p[i], y[i]);
            assert!(close(g[i], w * d / 4.0, 1e-14));
        }
        assert!(close(l, expect / 4.0, 1e-14));
    }

    fn perfect() -> LossSample {
        LossSample {
            probs: vec![1.0, 0.0, 1.0],
            target: vec![true, false, true],
            motion_prob: 1.0,
            moving: true,
            iou_pred: 0.8,
            iou_true: 0.8,
            confidence: 0.0,
        }
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let b = composite_loss(&perfect(), &LossConfig::default()).unwrap();
        assert!(b.total.abs() < 1e-4, "{b:?}");
        assert_eq!(b.regularizer, 0.0);
        assert!(frame_loss(&perfect(), &FrameLossConfig::default()).unwrap().abs() < 1e-4);
    }

    #[test]
    fn regularizer_switches_with_motion_state() {
        let cfg = LossConfig::default();
        let mut s = perfect();
        s.confidence = 1.0;
        let moving = composite_loss(&s, &cfg).unwrap();
        s.moving = false;
        let still = composite_loss(&s, &cfg).unwrap();
        assert!(close(moving.regularizer, 0.1 * 5f64.ln(), 1e-15));
        assert!(close(still.regularizer, 0.001 * 5f64.ln(), 1e-15));
    }

    #[test]
    fn frame_loss_is_object_loss_without_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = FrameLossConfig::default();
        for _ in 0..20 {
            let s = random_sample(&mut rng, 9);
            let a = frame_loss(&s, &cfg).unwrap();
            let b = composite_loss(&s, &cfg.as_object_level()).unwrap().total;
            assert!(close(a, b, 1e-12 * a.abs().max(1.0)));
        }
    }

    /// Direct transcription of the formulas, sharing nothing with the code above.
    fn transcribed(s: &LossSample, cfg: &LossConfig) -> f64 {
        let n = s.probs.len() as f64;
        let mut focal = 0.0;
        let (mut inter, mut psum, mut ysum) = (0.0, 0.0, 0.0);
        for (p, &y) in s.probs.iter().zip(&s.target) {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            let y = if y { 1.0 } else { 0.0 };
            let pt = y * p + (1.0 - y) * (1.0 - p);
            let at = y * cfg.focal_alpha + (1.0 - y) * (1.0 - cfg.focal_alpha);
            focal += -at * (1.0 - pt).powf(cfg.focal_gamma) * pt.ln();
            inter += p * y;
            psum += p;
            ysum += y;
        }
        focal /= n;
        let dice = 1.0 - (2.0 * inter + 1e-6) / (psum + ysum + 1e-6);
        let m = if s.moving { 1.0 } else { 0.0 };
        let q = s.motion_prob.clamp(1e-7, 1.0 - 1e-7);
        let motion = -(m * q.ln() + (1.0 - m) * (1.0 - q).ln());
        let c = (cfg.c_max - 1.0) * s.confidence + 1.0;
        cfg.lambda_iou * (s.iou_pred - s.iou_true).powi(2)
            + c * (cfg.lambda_mask * (cfg.focal_weight * focal + cfg.dice_weight * dice) + cfg.lambda_motion * motion)
            - (cfg.lambda_conf_moving * m + cfg.lambda_conf_static * (1.0 - m)) * c.ln()
    }

    #[test]
    fn matches_transcribed_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = LossConfig::default();
        for _ in 0..50 {
            let s = random_sample(&mut rng, 16);
            let a = composite_loss(&s, &cfg).unwrap().total;
            let b = transcribed(&s, &cfg);
            assert!(close(a, b, 1e-12 * b.abs().max(1.0)), "{a} vs {b}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = LossConfig::default();
        let fcfg = FrameLossConfig::default();
        for _ in 0..5 {
            let s = random_sample(&mut rng, 12);
            let e = grad_check(|x| composite_loss_grad(x, &cfg).map(|(b, g)| (b.total, g)), &s).unwrap();
            assert!(e < 1e-4, "{e}");
            let e = grad_check(|x| frame_loss_grad(x, &fcfg).map(|(b, g)| (b.total, g)), &s).unwrap();
            assert!(e < 1e-4, "{e}");
        }
    }

    #[test]
    fn stationary_confidence_matches_scan() {
        let mut cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_sample(&mut rng, 8);
        s.moving = true;
        // Pick the coefficient so the optimum lands inside (1, c_max).
        let b = composite_loss(&s, &cfg).unwrap();
        cfg.lambda_conf_moving = 2.5 * (cfg.lambda_mask * b.mask + cfg.lambda_motion * b.motion);
        let star = optimal_rescaled_confidence(&s, &cfg).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=4000 {
            let c = i as f64 / 4000.0;
            let v = composite_loss(
                &LossSample {
                    confidence: c,
                    ..s.clone()
                },
                &cfg,
            )
            .unwrap()
            .total;
            if v < best.0 {
                best = (v, (cfg.c_max - 1.0) * c + 1.0);
            }
        }
        assert!(close(star, 2.5, 1e-12), "{star}");
        assert!(close(best.1, star, 2e-3), "{} vs {star}", best.1);
    }

    #[test]
    fn lower_confidence_shrinks_the_modulated_term() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let s = random_sample(&mut rng, 6);
            let hi = composite_loss(&s, &cfg).unwrap();
            let lo = composite_loss(
                &LossSample {
                    confidence: s.confidence * 0.5,
                    ..s.clone()
                },
                &cfg,
            )
            .unwrap();
            let modulated = |b: &LossBreakdown| b.total + b.regularizer - cfg.lambda_iou * b.iou;
            assert!(modulated(&lo) < modulated(&hi));
            assert!(hi.regularizer <= cfg.lambda_conf_moving * cfg.c_max.ln() + 1e-15);
            assert!(hi.focal >= 0.0 && hi.dice >= 0.0 && hi.motion >= 0.0);
        }
    }
}
