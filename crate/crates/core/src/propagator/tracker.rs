use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Prompt, TrackId};
use crate::error::{Error, Result};
use crate::mask::{dilate, erode, iou, BinaryMask};

/// Carries object masks across frames from prompts.
pub trait Tracker {
    /// Drops all state and starts over from `prompts`.
    fn init(&mut self, prompts: &[Prompt]) -> Result<()>;
    fn add_prompt(&mut self, prompt: &Prompt) -> Result<()>;
    /// Masks of the known tracks at `frame`.
    fn propagate(&mut self, frame: usize) -> Result<Vec<(TrackId, BinaryMask)>>;
}

impl<T: Tracker + ?Sized> Tracker for Box<T> {
    fn init(&mut self, prompts: &[Prompt]) -> Result<()> {
        (**self).init(prompts)
    }
    fn add_prompt(&mut self, prompt: &Prompt) -> Result<()> {
        (**self).add_prompt(prompt)
    }
    fn propagate(&mut self, frame: usize) -> Result<Vec<(TrackId, BinaryMask)>> {
        (**self).propagate(frame)
    }
}

/// Returns the latest prompt mask of every track, unchanged.
#[derive(Clone, Debug, Default)]
pub struct CarryoverTracker {
    latest: BTreeMap<TrackId, BinaryMask>,
}

impl CarryoverTracker {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Tracker for CarryoverTracker {
    fn init(&mut self, prompts: &[Prompt]) -> Result<()> {
        self.latest.clear();
        for p in prompts {
            self.add_prompt(p)?;
        }
        Ok(())
    }

    fn add_prompt(&mut self, prompt: &Prompt) -> Result<()> {
        self.latest.insert(prompt.track, prompt.mask.clone());
        Ok(())
    }

    fn propagate(&mut self, _frame: usize) -> Result<Vec<(TrackId, BinaryMask)>> {
        Ok(self.latest.iter().map(|(&id, m)| (id, m.clone())).collect())
    }
}

/// Degradations applied to oracle masks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Corruption {
    /// Per-pixel flip probability.
    pub flip_prob: f64,
    /// Positive dilates, negative erodes, by this Chebyshev radius.
    pub morph_radius: i32,
    /// Probability that a whole frame comes back empty.
    pub dropout_prob: f64,
}

impl Corruption {
    pub fn is_identity(&self) -> bool {
        self.flip_prob == 0.0 && self.morph_radius == 0 && self.dropout_prob == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("flip_prob", self.flip_prob), ("dropout_prob", self.dropout_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub(crate) fn apply(&self, mask: &BinaryMask, rng: &mut impl Rng) -> BinaryMask {
        if self.dropout_prob > 0.0 && rng.random_bool(self.dropout_prob) {
            let (h, w) = mask.dims();
            return BinaryMask::new(h, w).expect("nonzero dims");
        }
        let mut out = match self.morph_radius {
            0 => mask.clone(),
            r if r > 0 => dilate(mask, r as usize),
            r => erode(mask, r.unsigned_abs() as usize),
        };
        if self.flip_prob > 0.0 {
            let (h, w) = out.dims();
            for r in 0..h {
                for c in 0..w {
                    if rng.random_bool(self.flip_prob) {
                        out.set(r, c, !out.get(r, c));
                    }
                }
            }
        }
        out
    }
}

/// SplitMix64 finalizer, used to derive independent RNG seeds.
pub(crate) fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn rng_for(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ a) ^ b))
}

#[derive(Clone, Debug)]
enum Binding {
    Object(u32),
    Fixed(BinaryMask),
}

/// Knows the ground truth. A prompt binds its track to the ground-truth
/// object it overlaps most at the prompt frame (lowest id on ties); after that
/// the track follows that object, optionally corrupted. A prompt that overlaps
/// no object binds the track to the prompt mask itself.
#[derive(Clone, Debug)]
pub struct OracleTracker {
    gt: Arc<BTreeMap<u32, Vec<BinaryMask>>>,
    corruption: Corruption,
    seed: u64,
    bindings: BTreeMap<TrackId, Binding>,
}

impl OracleTracker {
    /// `gt` maps object ids to one mask per frame.
    pub fn new(gt: Arc<BTreeMap<u32, Vec<BinaryMask>>>, corruption: Corruption, seed: u64) -> Self {
        Self {
            gt,
            corruption,
            seed,
            bindings: BTreeMap::new(),
        }
    }

    /// The ground-truth object a track is bound to, if any.
    pub fn bound_object(&self, track: TrackId) -> Option<u32> {
        match self.bindings.get(&track) {
            Some(Binding::Object(id)) => Some(*id),
            _ => None,
        }
    }
}

impl Tracker for OracleTracker {
    fn init(&mut self, prompts: &[Prompt]) -> Result<()> {
        self.bindings.clear();
        for p in prompts {
            self.add_prompt(p)?;
        }
        Ok(())
    }

    fn add_prompt(&mut self, prompt: &Prompt) -> Result<()> {
        let mut best: Option<(u32, f64)> = None;
        for (&id, track) in self.gt.iter() {
            let gt = track
                .get(prompt.frame)
                .ok_or_else(|| Error::Tracker(format!("prompt frame {} beyond ground truth", prompt.frame)))?;
            let score = iou(&prompt.mask, gt)?;
            if score > 0.0 && best.is_none_or(|(_, b)| score > b) {
                best = Some((id, score));
            }
        }
        let binding = match best {
            Some((id, _)) => Binding::Object(id),
            None => Binding::Fixed(prompt.mask.clone()),
        };
        self.bindings.insert(prompt.track, binding);
        Ok(())
    }

    fn propagate(&mut self, frame: usize) -> Result<Vec<(TrackId, BinaryMask)>> {
        let mut out = Vec::with_capacity(self.bindings.len());
        for (&track, binding) in &self.bindings {
            let clean = match binding {
                Binding::Fixed(m) => m.clone(),
                Binding::Object(id) => self.gt[id]
                    .get(frame)
                    .ok_or_else(|| Error::Tracker(format!("frame {frame} beyond ground truth")))?
                    .clone(),
            };
            let mask = if self.corruption.is_identity() {
                clean
            } else {
                let mut rng = rng_for(self.seed, track as u64, frame as u64);
                self.corruption.apply(&clean, &mut rng)
            };
            out.push((track, mask));
        }
        Ok(out)
    }
}
