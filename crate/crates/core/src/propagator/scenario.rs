//! Scripted synthetic sequences: shapes moving along keyframed trajectories,
//! with motion intervals in seconds.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::proposer::{SyntheticNoise, SyntheticProposer};
use super::tracker::{Corruption, OracleTracker};
use crate::annotations::{expand_flags, MotionInterval, SequenceAnnotation};
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, LabelMap, MaskStore};
use crate::metrics::{MotionSequence, SequencePrediction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect,
    Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    /// `[row, col]` of the shape center, in pixels.
    pub center: [f64; 2],
    /// `[height, width]` in pixels.
    pub size: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioObject {
    pub id: u32,
    pub shape: Shape,
    pub keyframes: Vec<Keyframe>,
    /// First visible frame.
    #[serde(default)]
    pub appear: usize,
    /// First frame after the object leaves; visible to the end when absent.
    #[serde(default)]
    pub disappear: Option<usize>,
    #[serde(default)]
    pub motion: Vec<MotionInterval>,
}

fn default_fps() -> f64 {
    1.0
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub frame_count: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Later objects occlude earlier ones.
    pub objects: Vec<ScenarioObject>,
    #[serde(default)]
    pub proposer: SyntheticNoise,
    #[serde(default)]
    pub tracker: Corruption,
}

impl ScenarioObject {
    fn pose(&self, t: usize) -> ([f64; 2], [f64; 2]) {
        let k = &self.keyframes;
        if t <= k[0].frame {
            return (k[0].center, k[0].size);
        }
        for w in k.windows(2) {
            if t <= w[1].frame {
                let a = (t - w[0].frame) as f64 / (w[1].frame - w[0].frame) as f64;
                let lerp = |x: [f64; 2], y: [f64; 2]| [x[0] + a * (y[0] - x[0]), x[1] + a * (y[1] - x[1])];
                return (lerp(w[0].center, w[1].center), lerp(w[0].size, w[1].size));
            }
        }
        let last = k.last().expect("validated nonempty");
        (last.center, last.size)
    }

    fn visible(&self, t: usize) -> bool {
        t >= self.appear && self.disappear.is_none_or(|d| t < d)
    }

    /// Unoccluded mask: pixels whose center falls inside the shape.
    fn draw(&self, t: usize, h: usize, w: usize) -> Result<BinaryMask> {
        let mut m = BinaryMask::new(h, w)?;
        if !self.visible(t) {
            return Ok(m);
        }
        let ([cy, cx], [sh, sw]) = self.pose(t);
        let (ry, rx) = (sh / 2.0, sw / 2.0);
        let r0 = (cy - ry - 0.5).ceil() as i64;
        let r1 = (cy + ry - 0.5).floor() as i64;
        for r in r0.max(0)..=r1.min(h as i64 - 1) {
            let half = match self.shape {
                Shape::Rect => rx,
                Shape::Ellipse => {
                    let dy = (r as f64 + 0.5 - cy) / ry;
                    rx * (1.0 - dy * dy).max(0.0).sqrt()
                }
            };
            let c0 = (cx - half - 0.5).ceil() as i64;
            let c1 = (cx + half - 0.5).floor() as i64;
            m.fill_rect(r, c0, r, c1);
        }
        Ok(m)
    }
}

impl Scenario {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let s: Scenario = serde_json::from_slice(bytes)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Missing(path.to_path_buf()),
            _ => Error::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        Self::from_json(&bytes).map_err(|e| match e {
            Error::Json(e) => Error::Schema {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
            Error::InvalidInput(m) => Error::Schema {
                path: path.to_path_buf(),
                message: m,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.height == 0 || self.width == 0 {
            return bad("canvas must be nonempty".into());
        }
        if self.frame_count == 0 {
            return bad("frame_count must be positive".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            if o.id == 0 || o.id > 255 {
                return bad(format!("object id {} outside 1..=255", o.id));
            }
            if !seen.insert(o.id) {
                return bad(format!("duplicate object id {}", o.id));
            }
            if o.keyframes.is_empty() {
                return bad(format!("object {} has no keyframes", o.id));
            }
            if o.keyframes.windows(2).any(|w| w[0].frame >= w[1].frame) {
                return bad(format!("object {}: keyframes must have increasing frames", o.id));
            }
            for k in &o.keyframes {
                if k.size.iter().chain(&k.center).any(|v| !v.is_finite()) || k.size.iter().any(|&v| v <= 0.0) {
                    return bad(format!("object {}: bad keyframe at frame {}", o.id, k.frame));
                }
            }
        }
        self.proposer.validate()?;
        self.tracker.validate()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn annotation(&self) -> Result<SequenceAnnotation> {
        SequenceAnnotation::new(
            self.name.clone(),
            self.fps,
            self.frame_count,
            self.objects.iter().map(|o| (o.id, o.motion.clone())).collect(),
        )
    }

    /// Visible (occlusion-resolved) masks and motion flags. Frames where an
    /// object is invisible are static regardless of its intervals.
    pub fn ground_truth(&self) -> Result<MotionSequence> {
        self.validate()?;
        let (h, w) = self.dims();
        let n = self.frame_count;
        let mut tracks: Vec<Vec<BinaryMask>> = Vec::with_capacity(self.objects.len());
        for o in &self.objects {
            tracks.push((0..n).map(|t| o.draw(t, h, w)).collect::<Result<_>>()?);
        }
        for t in 0..n {
            for front in (1..tracks.len()).rev() {
                let (back, rest) = tracks.split_at_mut(front);
                let top = rest[0][t].clone();
                for b in back.iter_mut() {
                    b[t].subtract_assign(&top)?;
                }
            }
        }
        let flags = expand_flags(&self.annotation()?);
        let mut objects = BTreeMap::new();
        let mut moving = BTreeMap::new();
        for (o, masks) in self.objects.iter().zip(tracks) {
            let row = flags[&o.id]
                .iter()
                .zip(&masks)
                .map(|(&f, m)| f && !m.is_empty())
                .collect();
            moving.insert(o.id, row);
            objects.insert(o.id, masks);
        }
        let seq = SequencePrediction::new((0..n).collect(), (h, w), objects)?;
        MotionSequence::ground_truth(seq, moving)
    }

    pub fn label_maps(&self) -> Result<MaskStore> {
        let gt = self.ground_truth()?;
        let (h, w) = self.dims();
        let mut maps = Vec::with_capacity(self.frame_count);
        for t in 0..self.frame_count {
            let masks: Vec<(u8, &BinaryMask)> = gt
                .tracks()
                .objects()
                .iter()
                .map(|(&id, track)| (id as u8, &track[t]))
                .collect();
            maps.push(LabelMap::compose(h, w, masks)?);
        }
        Ok(MaskStore {
            frames: (0..self.frame_count).collect(),
            maps,
        })
    }

    /// Proposer and oracle tracker factory driven by this scenario's noise
    /// settings and seed.
    pub fn simulation(&self) -> Result<(SyntheticProposer, impl Fn() -> OracleTracker)> {
        let gt = self.ground_truth()?;
        let masks = Arc::new(gt.tracks().objects().clone());
        let proposer = SyntheticProposer::new(
            Arc::clone(&masks),
            gt.moving().clone(),
            self.frame_count,
            self.dims(),
            self.proposer.clone(),
            self.seed,
        )?;
        let corruption = self.tracker.clone();
        let seed = self.seed;
        Ok((proposer, move || {
            OracleTracker::new(Arc::clone(&masks), corruption.clone(), seed)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(json: &str) -> Scenario {
        Scenario::from_json(json.as_bytes()).unwrap()
    }

    #[test]
    fn rect_and_ellipse_rasterize() {
        let s = scenario(
            r#"{"height": 10, "width": 10, "frame_count": 1, "objects": [
                {"id": 1, "shape": "rect", "keyframes": [{"frame": 0, "center": [2, 3], "size": [2, 4]}]},
                {"id": 2, "shape": "ellipse", "keyframes": [{"frame": 0, "center": [7.5, 7.5], "size": [5, 5]}]}
            ]}"#,
        );
        let gt = s.ground_truth().unwrap();
        let rect = &gt.tracks().objects()[&1][0];
        assert_eq!(rect.area(), 8);
        assert!(rect.get(1, 1) && rect.get(2, 4) && !rect.get(0, 1) && !rect.get(1, 5));
        let ell = &gt.tracks().objects()[&2][0];
        // Integer offsets (dy, dx) from the center pixel with dy^2 + dx^2 <= 6.25.
        assert_eq!(ell.area(), 21);
        assert!(ell.get(7, 7) && ell.get(5, 6) && !ell.get(5, 5));
    }

    #[test]
    fn later_objects_occlude_and_invisible_means_static() {
        let s = scenario(
            r#"{"height": 8, "width": 8, "frame_count": 4, "objects": [
                {"id": 1, "shape": "rect", "keyframes": [{"frame": 0, "center": [4, 4], "size": [4, 4]}],
                 "disappear": 3, "motion": [[0, 4]]},
                {"id": 2, "shape": "rect", "keyframes": [{"frame": 0, "center": [4, 6], "size": [4, 4]}], "appear": 1}
            ]}"#,
        );
        let gt = s.ground_truth().unwrap();
        let a = &gt.tracks().objects()[&1];
        assert_eq!(a[0].area(), 16);
        assert_eq!(a[1].area(), 8);
        assert!(a[3].is_empty());
        assert_eq!(gt.moving()[&1], vec![true, true, true, false]);
        assert_eq!(gt.moving()[&2], vec![false; 4]);
    }

    #[test]
    fn keyframes_interpolate_linearly() {
        let s = scenario(
            r#"{"height": 4, "width": 20, "frame_count": 5, "objects": [
                {"id": 1, "shape": "rect", "keyframes": [
                    {"frame": 0, "center": [2, 2], "size": [2, 2]},
                    {"frame": 4, "center": [2, 10], "size": [2, 2]}]}
            ]}"#,
        );
        let gt = s.ground_truth().unwrap();
        let cols: Vec<usize> = gt.tracks().objects()[&1]
            .iter()
            .map(|m| m.iter_ones().map(|(_, c)| c).min().unwrap())
            .collect();
        assert_eq!(cols, vec![1, 3, 5, 7, 9]);
    }

    #[test]
    fn rejects_bad_scenarios() {
        for json in [
            r#"{"height": 0, "width": 4, "frame_count": 1, "objects": []}"#,
            r#"{"height": 4, "width": 4, "frame_count": 1, "objects": [{"id": 0, "shape": "rect", "keyframes": [{"frame": 0, "center": [1,1], "size": [1,1]}]}]}"#,
            r#"{"height": 4, "width": 4, "frame_count": 1, "objects": [{"id": 1, "shape": "rect", "keyframes": []}]}"#,
            r#"{"height": 4, "width": 4, "frame_count": 1, "objects": [{"id": 1, "shape": "rect", "keyframes": [{"frame": 0, "center": [1,1], "size": [1,1]}], "motion": [[2, 1]]}]}"#,
        ] {
            assert!(Scenario::from_json(json.as_bytes()).is_err(), "{json}");
        }
    }
}
