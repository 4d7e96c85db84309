//! Proposer/tracker linking.
//!
//! A proposer emits per-frame candidate masks with motion, IoU and confidence
//! scores. A tracker carries object masks across frames from prompts. The
//! propagator matches the two every frame, adds or reinforces tracks from
//! confident moving proposals, and labels each track moving or static.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::{threshold_match, ScoreMatrix};
use crate::error::{Error, Result};
use crate::mask::{iou, precision, BinaryMask, LabelMap, MaskStore};
use crate::metrics::{MotionSequence, SequencePrediction};

pub mod proposer;
pub mod scenario;
pub mod tracker;

pub use proposer::{
    read_proposals, write_proposals, FileProposer, Prefix, Proposer, SyntheticNoise, SyntheticProposer,
};
pub use scenario::{Keyframe, Scenario, ScenarioObject, Shape};
pub use tracker::{CarryoverTracker, Corruption, OracleTracker, Tracker};

pub type TrackId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub mask: BinaryMask,
    pub motion: f64,
    pub iou: f64,
    pub confidence: f64,
}

impl Proposal {
    fn is_confident(&self, cfg: &PropagatorConfig) -> bool {
        self.motion > cfg.tau_motion && self.iou > cfg.tau_iou
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameProposals {
    pub frame: usize,
    pub proposals: Vec<Proposal>,
}

impl FrameProposals {
    fn check(&self, frame: usize, dims: (usize, usize)) -> Result<()> {
        if self.frame != frame {
            return Err(Error::Proposer(format!(
                "asked for frame {frame}, got frame {}",
                self.frame
            )));
        }
        for (i, p) in self.proposals.iter().enumerate() {
            if p.mask.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: p.mask.dims(),
                });
            }
            for (name, v) in [("motion", p.motion), ("iou", p.iou), ("confidence", p.confidence)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Proposer(format!(
                        "frame {frame} proposal {i}: {name} score {v} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorConfig {
    /// Motion score above which a proposal counts as moving.
    pub tau_motion: f64,
    /// Predicted IoU above which a proposal is trusted.
    pub tau_iou: f64,
    /// IoU with the matched track above which a proposal reinforces it.
    pub tau_match: f64,
    /// Precision against every track below which a proposal starts a new one.
    pub tau_new: f64,
    pub topk_fraction: f64,
    pub topk_iou_floor: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            tau_motion: 0.5,
            tau_iou: 0.7,
            tau_match: 0.95,
            tau_new: 0.3,
            topk_fraction: 0.10,
            topk_iou_floor: 0.95,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_motion", self.tau_motion),
            ("tau_iou", self.tau_iou),
            ("tau_match", self.tau_match),
            ("tau_new", self.tau_new),
            ("topk_fraction", self.topk_fraction),
            ("topk_iou_floor", self.topk_iou_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prompt {
    pub frame: usize,
    pub track: TrackId,
    pub mask: BinaryMask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Online,
    Offline,
}

/// A tracker plus the bookkeeping the propagator keeps next to it.
#[derive(Debug)]
pub struct TrackerState<T> {
    tracker: T,
    tracks: BTreeSet<TrackId>,
    prompts: Vec<Prompt>,
    next_id: TrackId,
}

impl<T: Tracker> TrackerState<T> {
    pub fn new(tracker: T) -> Self {
        Self {
            tracker,
            tracks: BTreeSet::new(),
            prompts: Vec::new(),
            next_id: 1,
        }
    }

    /// Replaces all tracks with the ones named by `prompts`.
    pub fn init(&mut self, prompts: Vec<Prompt>) -> Result<()> {
        self.tracker.init(&prompts)?;
        self.tracks = prompts.iter().map(|p| p.track).collect();
        self.next_id = self.tracks.last().map_or(1, |&id| id + 1);
        self.prompts = prompts;
        Ok(())
    }

    fn add_prompt(&mut self, prompt: Prompt) -> Result<()> {
        self.tracker.add_prompt(&prompt)?;
        self.tracks.insert(prompt.track);
        self.next_id = self.next_id.max(prompt.track + 1);
        self.prompts.push(prompt);
        Ok(())
    }

    fn allocate(&mut self) -> TrackId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn tracks(&self) -> &BTreeSet<TrackId> {
        &self.tracks
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn tracker(&self) -> &T {
        &self.tracker
    }

    fn propagate(&mut self, frame: usize, dims: (usize, usize)) -> Result<BTreeMap<TrackId, BinaryMask>> {
        let mut out = BTreeMap::new();
        for (id, mask) in self.tracker.propagate(frame)? {
            if !self.tracks.contains(&id) {
                return Err(Error::Tracker(format!("unknown track {id} at frame {frame}")));
            }
            if mask.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: mask.dims(),
                });
            }
            if out.insert(id, mask).is_some() {
                return Err(Error::Tracker(format!("track {id} returned twice at frame {frame}")));
            }
        }
        for &id in &self.tracks {
            if let Entry::Vacant(e) = out.entry(id) {
                e.insert(BinaryMask::new(dims.0, dims.1)?);
            }
        }
        Ok(out)
    }
}

/// One track at one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackFrame {
    pub mask: BinaryMask,
    pub moving: bool,
    /// Predicted IoU of the matched proposal, 0 without a match.
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutput {
    pub frame: usize,
    pub tracks: BTreeMap<TrackId, TrackFrame>,
}

/// Per-track per-frame results. `None` marks frames a pass never emitted
/// for that track.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackOutput {
    num_frames: usize,
    dims: (usize, usize),
    tracks: BTreeMap<TrackId, Vec<Option<TrackFrame>>>,
}

impl TrackOutput {
    pub fn empty(num_frames: usize, dims: (usize, usize)) -> Self {
        Self {
            num_frames,
            dims,
            tracks: BTreeMap::new(),
        }
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn tracks(&self) -> &BTreeMap<TrackId, Vec<Option<TrackFrame>>> {
        &self.tracks
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn get(&self, track: TrackId, frame: usize) -> Option<&TrackFrame> {
        self.tracks.get(&track)?.get(frame)?.as_ref()
    }

    pub fn frame(&self, frame: usize) -> FrameOutput {
        let tracks = self
            .tracks
            .iter()
            .filter_map(|(&id, row)| row[frame].clone().map(|f| (id, f)))
            .collect();
        FrameOutput { frame, tracks }
    }

    fn record(&mut self, out: &FrameOutput) {
        let n = self.num_frames;
        for (&id, f) in &out.tracks {
            self.tracks.entry(id).or_insert_with(|| vec![None; n])[out.frame] = Some(f.clone());
        }
    }

    /// Fills frames missing here from `other`; entries already present win.
    pub fn merge(&mut self, other: TrackOutput) {
        for (id, row) in other.tracks {
            let mine = self.tracks.entry(id).or_insert_with(|| vec![None; self.num_frames]);
            for (slot, f) in mine.iter_mut().zip(row) {
                if slot.is_none() {
                    *slot = f;
                }
            }
        }
    }

    /// Tracks as evaluation input. Frames without output are empty and static.
    pub fn to_motion_sequence(&self) -> Result<MotionSequence> {
        let (h, w) = self.dims;
        let empty = BinaryMask::new(h, w)?;
        let mut objects = BTreeMap::new();
        let mut moving = BTreeMap::new();
        for (&id, row) in &self.tracks {
            objects.insert(
                id,
                row.iter()
                    .map(|f| f.as_ref().map_or_else(|| empty.clone(), |f| f.mask.clone()))
                    .collect(),
            );
            moving.insert(id, row.iter().map(|f| f.as_ref().is_some_and(|f| f.moving)).collect());
        }
        let frames = (0..self.num_frames).collect();
        MotionSequence::new(SequencePrediction::new(frames, self.dims, objects)?, moving)
    }

    /// Flattens tracks into label maps (higher ids paint over lower ones) and
    /// the moving-frame sidecar. Moving frames whose painted mask ended up
    /// empty are dropped from the sidecar.
    pub fn to_store(&self) -> Result<(MaskStore, BTreeMap<u32, Vec<usize>>)> {
        let (h, w) = self.dims;
        let mut maps = vec![LabelMap::new(h, w)?; self.num_frames];
        for (&id, row) in &self.tracks {
            let label = u8::try_from(id)
                .ok()
                .filter(|&l| l > 0)
                .ok_or_else(|| Error::InvalidInput(format!("track id {id} does not fit an 8-bit label map")))?;
            for (t, f) in row.iter().enumerate() {
                if let Some(f) = f {
                    for (r, c) in f.mask.iter_ones() {
                        maps[t].set(r, c, label);
                    }
                }
            }
        }
        let mut sidecar = BTreeMap::new();
        for (&id, row) in &self.tracks {
            let label = id as u8;
            let frames = row
                .iter()
                .enumerate()
                .filter(|(t, f)| f.as_ref().is_some_and(|f| f.moving) && maps[*t].labels().contains(&label))
                .map(|(t, _)| t)
                .collect();
            sidecar.insert(id, frames);
        }
        let store = MaskStore {
            frames: (0..self.num_frames).collect(),
            maps,
        };
        Ok((store, sidecar))
    }
}

/// Indices of confident proposals that would start new tracks, in proposal
/// order.
///
/// A proposal qualifies when its precision against every existing track mask
/// is below `tau_new`. Qualifying proposals that overlap each other (precision
/// at least `tau_new` in either direction) are resolved in favor of the higher
/// predicted IoU, then the lower index.
fn new_track_candidates(props: &[Proposal], existing: &[&BinaryMask], cfg: &PropagatorConfig) -> Result<Vec<usize>> {
    let mut candidates = Vec::new();
    for (j, p) in props.iter().enumerate() {
        if !p.is_confident(cfg) || p.mask.is_empty() {
            continue;
        }
        let mut max_prec = 0.0f64;
        for m in existing {
            max_prec = max_prec.max(precision(&p.mask, m)?);
        }
        if max_prec < cfg.tau_new {
            candidates.push(j);
        }
    }
    let mut ranked = candidates.clone();
    ranked.sort_by(|&a, &b| props[b].iou.total_cmp(&props[a].iou).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for j in ranked {
        let mut clash = false;
        for &a in &accepted {
            let (pj, pa) = (&props[j].mask, &props[a].mask);
            if precision(pj, pa)? >= cfg.tau_new || precision(pa, pj)? >= cfg.tau_new {
                clash = true;
                break;
            }
        }
        if !clash {
            accepted.push(j);
        }
    }
    accepted.sort_unstable();
    Ok(accepted)
}

fn step_frame<T: Tracker>(
    state: &mut TrackerState<T>,
    t: usize,
    props: &FrameProposals,
    update_prompt: bool,
    dims: (usize, usize),
    cfg: &PropagatorConfig,
) -> Result<FrameOutput> {
    let propagated = state.propagate(t, dims)?;
    let props = &props.proposals;

    // Empty propagated masks take no part in matching.
    let rows: Vec<TrackId> = propagated
        .iter()
        .filter(|(_, m)| !m.is_empty())
        .map(|(&id, _)| id)
        .collect();
    let mut scores = Vec::with_capacity(rows.len() * props.len());
    for id in &rows {
        for p in props {
            scores.push(iou(&propagated[id], &p.mask)?);
        }
    }
    let matrix = ScoreMatrix::new(rows.len(), props.len(), scores)?;
    // Pairs with no overlap at all are not matches.
    let assignment = threshold_match(&matrix, f64::MIN_POSITIVE)?;
    let mut match_of: BTreeMap<TrackId, usize> = BTreeMap::new();
    let mut track_of: BTreeMap<usize, (TrackId, f64)> = BTreeMap::new();
    for &(r, c) in &assignment.pairs {
        match_of.insert(rows[r], c);
        track_of.insert(c, (rows[r], matrix.get(r, c)));
    }

    let mut tracks = BTreeMap::new();
    for (id, mask) in propagated.iter() {
        let (moving, quality) = match match_of.get(id) {
            Some(&j) => (props[j].motion > cfg.tau_motion, props[j].iou),
            None => (false, 0.0),
        };
        tracks.insert(
            *id,
            TrackFrame {
                mask: mask.clone(),
                moving,
                quality,
            },
        );
    }

    if update_prompt {
        let existing: Vec<&BinaryMask> = propagated.values().collect();
        let new = new_track_candidates(props, &existing, cfg)?;
        let mut reinforce = Vec::new();
        for (j, p) in props.iter().enumerate() {
            if !p.is_confident(cfg) || p.mask.is_empty() || new.binary_search(&j).is_ok() {
                continue;
            }
            let mut max_prec = 0.0f64;
            for m in &existing {
                max_prec = max_prec.max(precision(&p.mask, m)?);
            }
            // Proposals dropped by the intra-frame overlap rule neither seed
            // nor reinforce this frame.
            if max_prec < cfg.tau_new {
                continue;
            }
            if let Some(&(id, score)) = track_of.get(&j) {
                if score > cfg.tau_match {
                    reinforce.push((id, j));
                }
            }
        }
        for (id, j) in reinforce {
            state.add_prompt(Prompt {
                frame: t,
                track: id,
                mask: props[j].mask.clone(),
            })?;
        }
        for j in new {
            let id = state.allocate();
            state.add_prompt(Prompt {
                frame: t,
                track: id,
                mask: props[j].mask.clone(),
            })?;
            tracks.insert(
                id,
                TrackFrame {
                    mask: props[j].mask.clone(),
                    moving: true,
                    quality: props[j].iou,
                },
            );
        }
    }
    Ok(FrameOutput { frame: t, tracks })
}

fn fetch<P: Proposer + ?Sized>(proposer: &mut P, t: usize) -> Result<FrameProposals> {
    let props = proposer.propose(t)?;
    props.check(t, proposer.dims())?;
    Ok(props)
}

/// Walks from `t_start` to the end of the sequence in `direction`.
pub fn prop_step<T: Tracker, P: Proposer + ?Sized>(
    state: &mut TrackerState<T>,
    t_start: usize,
    direction: Direction,
    update_prompt: bool,
    proposer: &mut P,
    cfg: &PropagatorConfig,
) -> Result<TrackOutput> {
    prop_step_with(state, t_start, direction, update_prompt, proposer, cfg, &mut |_| {})
}

/// [`prop_step`] that hands each frame's final output to `on_frame` as soon
/// as the frame is processed.
pub fn prop_step_with<T: Tracker, P: Proposer + ?Sized>(
    state: &mut TrackerState<T>,
    t_start: usize,
    direction: Direction,
    update_prompt: bool,
    proposer: &mut P,
    cfg: &PropagatorConfig,
    on_frame: &mut dyn FnMut(&FrameOutput),
) -> Result<TrackOutput> {
    cfg.validate()?;
    let n = proposer.num_frames();
    if t_start >= n {
        return Err(Error::InvalidInput(format!(
            "start frame {t_start} outside a {n}-frame sequence"
        )));
    }
    let dims = proposer.dims();
    let mut output = TrackOutput::empty(n, dims);
    let frames: Box<dyn Iterator<Item = usize>> = match direction {
        Direction::Forward => Box::new(t_start..n),
        Direction::Backward => Box::new((0..=t_start).rev()),
    };
    for t in frames {
        let props = fetch(proposer, t)?;
        let out = step_frame(state, t, &props, update_prompt, dims, cfg)?;
        on_frame(&out);
        output.record(&out);
    }
    Ok(output)
}

/// Single causal forward pass.
pub fn run_online<T, P, F>(proposer: &mut P, factory: &F, cfg: &PropagatorConfig) -> Result<TrackOutput>
where
    T: Tracker,
    P: Proposer + ?Sized,
    F: Fn() -> T,
{
    run_online_with(proposer, factory, cfg, &mut |_| {})
}

pub fn run_online_with<T, P, F>(
    proposer: &mut P,
    factory: &F,
    cfg: &PropagatorConfig,
    on_frame: &mut dyn FnMut(&FrameOutput),
) -> Result<TrackOutput>
where
    T: Tracker,
    P: Proposer + ?Sized,
    F: Fn() -> T,
{
    run_online_state(proposer, factory, cfg, on_frame).map(|(out, _)| out)
}

fn run_online_state<T, P, F>(
    proposer: &mut P,
    factory: &F,
    cfg: &PropagatorConfig,
    on_frame: &mut dyn FnMut(&FrameOutput),
) -> Result<(TrackOutput, TrackerState<T>)>
where
    T: Tracker,
    P: Proposer + ?Sized,
    F: Fn() -> T,
{
    cfg.validate()?;
    if proposer.num_frames() == 0 {
        return Err(Error::InvalidInput("sequence has no frames".into()));
    }
    let first = fetch(proposer, 0)?;
    let mut state = TrackerState::new(factory());
    let seeds = new_track_candidates(&first.proposals, &[], cfg)?;
    let prompts = seeds
        .iter()
        .zip(1..)
        .map(|(&j, id)| Prompt {
            frame: 0,
            track: id,
            mask: first.proposals[j].mask.clone(),
        })
        .collect();
    state.init(prompts)?;
    let out = prop_step_with(&mut state, 0, Direction::Forward, true, proposer, cfg, on_frame)?;
    Ok((out, state))
}

/// Per-track prompt frames for the offline pass.
///
/// Frames a track was emitted on are ranked by quality (ties to the earlier
/// frame); the top `topk_fraction` of them are kept if their quality exceeds
/// `topk_iou_floor`. When none survive, the best frame is kept alone if its
/// quality exceeds `tau_iou`; otherwise the track gets no prompt.
pub fn select_topk(online: &TrackOutput, cfg: &PropagatorConfig) -> Vec<Prompt> {
    let mut prompts = Vec::new();
    for (&id, row) in online.tracks() {
        let mut ranked: Vec<(usize, &TrackFrame)> = row
            .iter()
            .enumerate()
            .filter_map(|(t, f)| f.as_ref().map(|f| (t, f)))
            .collect();
        if ranked.is_empty() {
            continue;
        }
        ranked.sort_by(|a, b| b.1.quality.total_cmp(&a.1.quality).then(a.0.cmp(&b.0)));
        // Guard against products like 0.1 * 30 landing just above an integer.
        let keep = ((cfg.topk_fraction * ranked.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut chosen: Vec<(usize, &TrackFrame)> = ranked
            .iter()
            .take(keep)
            .filter(|(_, f)| f.quality > cfg.topk_iou_floor && !f.mask.is_empty())
            .copied()
            .collect();
        if chosen.is_empty() {
            let (t, best) = ranked[0];
            if best.quality > cfg.tau_iou && !best.mask.is_empty() {
                chosen.push((t, best));
            }
        }
        chosen.sort_by_key(|(t, _)| *t);
        prompts.extend(chosen.into_iter().map(|(t, f)| Prompt {
            frame: t,
            track: id,
            mask: f.mask.clone(),
        }));
    }
    prompts
}

/// Frame with the largest summed quality over confident tracks; the earliest
/// such frame on ties, `None` when no frame has a confident track.
pub fn anchor_frame(online: &TrackOutput, cfg: &PropagatorConfig) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for t in 0..online.num_frames() {
        let total: f64 = online
            .tracks()
            .values()
            .filter_map(|row| row[t].as_ref())
            .filter(|f| f.quality > cfg.tau_iou)
            .map(|f| f.quality)
            .sum();
        if total > 0.0 && best.is_none_or(|(_, b)| total > b) {
            best = Some((t, total));
        }
    }
    best.map(|(t, _)| t)
}

/// Online pass, then forward and backward passes from the anchor frame with
/// the prompts fixed.
pub fn run_offline<T, P, F>(proposer: &mut P, factory: &F, cfg: &PropagatorConfig) -> Result<TrackOutput>
where
    T: Tracker,
    P: Proposer + ?Sized,
    F: Fn() -> T,
{
    let online = run_online(proposer, factory, cfg)?;
    let empty = TrackOutput::empty(online.num_frames(), online.dims());
    if online.is_empty() {
        return Ok(empty);
    }
    let prompts = select_topk(&online, cfg);
    let Some(anchor) = anchor_frame(&online, cfg) else {
        return Ok(empty);
    };
    if prompts.is_empty() {
        return Ok(empty);
    }
    let mut state = TrackerState::new(factory());
    state.init(prompts)?;
    let mut out = prop_step(&mut state, anchor, Direction::Forward, false, proposer, cfg)?;
    let backward = prop_step(&mut state, anchor, Direction::Backward, false, proposer, cfg)?;
    out.merge(backward);
    Ok(out)
}

pub fn run<T, P, F>(mode: Mode, proposer: &mut P, factory: &F, cfg: &PropagatorConfig) -> Result<TrackOutput>
where
    T: Tracker,
    P: Proposer + ?Sized,
    F: Fn() -> T,
{
    match mode {
        Mode::Online => run_online(proposer, factory, cfg),
        Mode::Offline => run_offline(proposer, factory, cfg),
    }
}

#[cfg(test)]
mod tests;
