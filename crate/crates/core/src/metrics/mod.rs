//! Sequence-level evaluation.
//!
//! [`mos`] holds the conventional region/contour/detection metrics, [`mosi`]
//! the instantaneous-motion protocol, and [`dataset`] the parallel runner and
//! dataset-level aggregation shared by both.

pub mod dataset;
pub mod mos;
pub mod mosi;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, LabelMap};

pub use dataset::{run_parallel, MosDatasetReport, MosiDatasetReport, SCHEMA_VERSION};
pub use mos::{
    contour_f, default_tolerance, detection_sr, eval_mos, EvalMode, MosConfig, MosReport, ObjectScores,
    DEFAULT_SR_THRESHOLDS,
};
pub use mosi::{
    associate, default_thresholds, eval_mosi, fp_count, j_mov, mt_iou, MosiConfig, MosiReport, Pairing, TiouEntry,
    DEFAULT_FP_FLOOR,
};

/// Object tracks over an ordered set of frames.
///
/// Every track holds one mask per frame; a frame where the object is absent
/// carries an empty mask. Ids are stable across frames.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePrediction {
    frames: Vec<usize>,
    dims: (usize, usize),
    objects: BTreeMap<u32, Vec<BinaryMask>>,
}

impl SequencePrediction {
    pub fn new(frames: Vec<usize>, dims: (usize, usize), objects: BTreeMap<u32, Vec<BinaryMask>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("sequence has no frames".into()));
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("frame indices must be strictly increasing".into()));
        }
        for (id, masks) in &objects {
            if masks.len() != frames.len() {
                return Err(Error::InvalidInput(format!(
                    "object {id} has {} masks for {} frames",
                    masks.len(),
                    frames.len()
                )));
            }
            if let Some(m) = masks.iter().find(|m| m.dims() != dims) {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: m.dims(),
                });
            }
        }
        Ok(Self { frames, dims, objects })
    }

    /// Splits per-frame label maps into per-object tracks.
    pub fn from_label_maps(frames: Vec<usize>, maps: &[LabelMap]) -> Result<Self> {
        if frames.len() != maps.len() {
            return Err(Error::InvalidInput(format!(
                "{} frame indices for {} label maps",
                frames.len(),
                maps.len()
            )));
        }
        let dims = maps
            .first()
            .map(LabelMap::dims)
            .ok_or_else(|| Error::InvalidInput("sequence has no frames".into()))?;
        if let Some(m) = maps.iter().find(|m| m.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: m.dims(),
            });
        }
        let split: Vec<_> = maps.iter().map(LabelMap::extract_all).collect();
        let mut objects: BTreeMap<u32, Vec<BinaryMask>> = BTreeMap::new();
        let empty = BinaryMask::new(dims.0, dims.1)?;
        for ids in split.iter().flat_map(|s| s.keys()) {
            objects.entry(u32::from(*ids)).or_default();
        }
        for (id, track) in objects.iter_mut() {
            *track = split
                .iter()
                .map(|s| s.get(&(*id as u8)).cloned().unwrap_or_else(|| empty.clone()))
                .collect();
        }
        Self::new(frames, dims, objects)
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn objects(&self) -> &BTreeMap<u32, Vec<BinaryMask>> {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Per-frame union of all objects.
    pub fn merged_frames(&self) -> Vec<BinaryMask> {
        let mut out = vec![BinaryMask::new(self.dims.0, self.dims.1).expect("dims validated"); self.len()];
        for track in self.objects.values() {
            for (acc, m) in out.iter_mut().zip(track) {
                acc.union_assign(m).expect("dims validated");
            }
        }
        out
    }

    /// The foreground/background view: a single object (id 1) holding the union of all objects.
    pub fn merged(&self) -> Self {
        let mut objects = BTreeMap::new();
        if !self.objects.is_empty() {
            objects.insert(1, self.merged_frames());
        }
        Self {
            frames: self.frames.clone(),
            dims: self.dims,
            objects,
        }
    }

    /// Relabels object ids; `map` must be injective over the present ids.
    pub fn relabel(&self, mut map: impl FnMut(u32) -> u32) -> Result<Self> {
        let mut objects = BTreeMap::new();
        for (&id, track) in &self.objects {
            if objects.insert(map(id), track.clone()).is_some() {
                return Err(Error::InvalidInput("relabelling is not injective".into()));
            }
        }
        Self::new(self.frames.clone(), self.dims, objects)
    }

    pub(crate) fn check_same_frames(&self, other: &Self) -> Result<()> {
        if self.frames != other.frames {
            return Err(Error::FrameMismatch(format!(
                "{} prediction frames vs {} ground-truth frames",
                self.frames.len(),
                other.frames.len()
            )));
        }
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: other.dims,
                actual: self.dims,
            });
        }
        Ok(())
    }
}

/// Object tracks with a per-frame motion flag.
///
/// A frame whose mask is empty always carries flag 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    tracks: SequencePrediction,
    moving: BTreeMap<u32, Vec<bool>>,
}

pub type MotionAwarePrediction = MotionSequence;
pub type MotionAwareGroundTruth = MotionSequence;

impl MotionSequence {
    pub fn new(tracks: SequencePrediction, moving: BTreeMap<u32, Vec<bool>>) -> Result<Self> {
        if !moving.keys().eq(tracks.objects.keys()) {
            return Err(Error::InvalidInput(
                "motion flags and masks cover different objects".into(),
            ));
        }
        for (id, flags) in &moving {
            let masks = &tracks.objects[id];
            if flags.len() != masks.len() {
                return Err(Error::InvalidInput(format!(
                    "object {id} has {} motion flags for {} frames",
                    flags.len(),
                    masks.len()
                )));
            }
            if let Some(t) = flags.iter().zip(masks).position(|(&f, m)| f && m.is_empty()) {
                return Err(Error::InvalidInput(format!(
                    "object {id} is flagged moving at frame {} but has an empty mask",
                    tracks.frames[t]
                )));
            }
        }
        Ok(Self { tracks, moving })
    }

    /// Like [`MotionSequence::new`], additionally requiring disjoint masks per frame.
    pub fn ground_truth(tracks: SequencePrediction, moving: BTreeMap<u32, Vec<bool>>) -> Result<Self> {
        let seq = Self::new(tracks, moving)?;
        let masks: Vec<_> = seq.tracks.objects.iter().collect();
        for t in 0..seq.tracks.len() {
            for (i, (a_id, a)) in masks.iter().enumerate() {
                for (b_id, b) in &masks[i + 1..] {
                    if a[t].intersects(&b[t])? {
                        return Err(Error::InvalidInput(format!(
                            "ground-truth objects {a_id} and {b_id} overlap at frame {}",
                            seq.tracks.frames[t]
                        )));
                    }
                }
            }
        }
        Ok(seq)
    }

    /// Builds a sequence from per-object lists of moving frame indices.
    pub fn from_moving_frames(tracks: SequencePrediction, moving_frames: &BTreeMap<u32, Vec<usize>>) -> Result<Self> {
        for (id, listed) in moving_frames {
            if !listed.is_empty() && !tracks.objects.contains_key(id) {
                return Err(Error::InvalidInput(format!(
                    "motion flags reference object {id}, which has no masks"
                )));
            }
            if let Some(f) = listed.iter().find(|f| tracks.frames.binary_search(f).is_err()) {
                return Err(Error::InvalidInput(format!(
                    "object {id} is flagged moving at frame {f}, which is not in the sequence"
                )));
            }
        }
        let moving = tracks
            .objects
            .keys()
            .map(|&id| {
                let listed = moving_frames.get(&id).map(Vec::as_slice).unwrap_or(&[]);
                (id, tracks.frames.iter().map(|f| listed.contains(f)).collect())
            })
            .collect();
        Self::new(tracks, moving)
    }

    pub fn tracks(&self) -> &SequencePrediction {
        &self.tracks
    }

    pub fn moving(&self) -> &BTreeMap<u32, Vec<bool>> {
        &self.moving
    }

    pub fn frames(&self) -> &[usize] {
        &self.tracks.frames
    }

    /// Moving frame indices per object, the sidecar representation.
    pub fn moving_frames(&self) -> BTreeMap<u32, Vec<usize>> {
        self.moving
            .iter()
            .map(|(&id, flags)| {
                let frames = flags
                    .iter()
                    .zip(&self.tracks.frames)
                    .filter(|(&f, _)| f)
                    .map(|(_, &t)| t)
                    .collect();
                (id, frames)
            })
            .collect()
    }

    pub fn relabel(&self, mut map: impl FnMut(u32) -> u32) -> Result<Self> {
        let tracks = self.tracks.relabel(&mut map)?;
        let moving = self.moving.iter().map(|(&id, f)| (map(id), f.clone())).collect();
        Self::new(tracks, moving)
    }
}

/// Track id, masks and optional motion flags.
pub(crate) type TrackRef<'a> = (u32, &'a [BinaryMask], Option<&'a [bool]>);

/// Orders tracks by content so that association does not depend on how
/// predicted objects happen to be numbered. Identical tracks compare equal and
/// then keep id order, which cannot change any reported value.
pub(crate) fn content_order(tracks: &[TrackRef<'_>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by(|&a, &b| {
        let (_, ma, fa) = tracks[a];
        let (_, mb, fb) = tracks[b];
        fa.cmp(&fb)
            .then_with(|| {
                ma.iter()
                    .zip(mb)
                    .map(|(x, y)| x.words().cmp(y.words()))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| tracks[a].0.cmp(&tracks[b].0))
    });
    order
}
