use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tracker::rng_for;
use super::{FrameProposals, Proposal};
use crate::error::{Error, Result};
use crate::mask::{read_label_map, write_label_png, BinaryMask, LabelMap};

/// Per-frame source of candidate masks.
pub trait Proposer {
    fn num_frames(&self) -> usize;
    fn dims(&self) -> (usize, usize);
    fn propose(&mut self, frame: usize) -> Result<FrameProposals>;
}

impl<P: Proposer + ?Sized> Proposer for Box<P> {
    fn num_frames(&self) -> usize {
        (**self).num_frames()
    }
    fn dims(&self) -> (usize, usize) {
        (**self).dims()
    }
    fn propose(&mut self, frame: usize) -> Result<FrameProposals> {
        (**self).propose(frame)
    }
}

/// The first `len` frames of another proposer.
pub struct Prefix<P> {
    inner: P,
    len: usize,
}

impl<P: Proposer> Prefix<P> {
    pub fn new(inner: P, len: usize) -> Self {
        let len = len.min(inner.num_frames());
        Self { inner, len }
    }
}

impl<P: Proposer> Proposer for Prefix<P> {
    fn num_frames(&self) -> usize {
        self.len
    }
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }
    fn propose(&mut self, frame: usize) -> Result<FrameProposals> {
        if frame >= self.len {
            return Err(Error::Proposer(format!("frame {frame} beyond prefix of {}", self.len)));
        }
        self.inner.propose(frame)
    }
}

/// Scores and noise for the synthetic proposer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticNoise {
    pub motion_score: f64,
    pub static_motion_score: f64,
    pub iou_score: f64,
    pub confidence: f64,
    /// Also propose visible objects that are not moving.
    pub include_static: bool,
    /// Scores are perturbed uniformly by up to this much, then clamped.
    pub score_jitter: f64,
    pub drop_prob: f64,
    pub flip_prob: f64,
    /// Frames of motion evidence per proposal, centered on the current one
    /// and clamped at the sequence ends.
    pub window: usize,
}

impl Default for SyntheticNoise {
    fn default() -> Self {
        Self {
            motion_score: 0.9,
            static_motion_score: 0.1,
            iou_score: 0.99,
            confidence: 0.9,
            include_static: false,
            score_jitter: 0.0,
            drop_prob: 0.0,
            flip_prob: 0.0,
            window: 1,
        }
    }
}

impl SyntheticNoise {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("motion_score", self.motion_score),
            ("static_motion_score", self.static_motion_score),
            ("iou_score", self.iou_score),
            ("confidence", self.confidence),
            ("score_jitter", self.score_jitter),
            ("drop_prob", self.drop_prob),
            ("flip_prob", self.flip_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.window == 0 {
            return Err(Error::InvalidInput("window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Proposes the visible ground-truth masks of a scripted sequence.
///
/// The motion score blends `static_motion_score` and `motion_score` by the
/// fraction of moving frames in the window. Output depends only on the frame
/// index and seed, never on query order.
#[derive(Clone, Debug)]
pub struct SyntheticProposer {
    masks: Arc<BTreeMap<u32, Vec<BinaryMask>>>,
    moving: BTreeMap<u32, Vec<bool>>,
    noise: SyntheticNoise,
    seed: u64,
    num_frames: usize,
    dims: (usize, usize),
}

impl SyntheticProposer {
    pub fn new(
        masks: Arc<BTreeMap<u32, Vec<BinaryMask>>>,
        moving: BTreeMap<u32, Vec<bool>>,
        num_frames: usize,
        dims: (usize, usize),
        noise: SyntheticNoise,
        seed: u64,
    ) -> Result<Self> {
        noise.validate()?;
        for (id, track) in masks.iter() {
            if let Some(m) = track.iter().find(|m| m.dims() != dims) {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: m.dims(),
                });
            }
            let flags = moving
                .get(id)
                .ok_or_else(|| Error::InvalidInput(format!("no motion flags for object {id}")))?;
            if track.len() != num_frames || flags.len() != num_frames {
                return Err(Error::FrameMismatch(format!("object {id} has a different frame count")));
            }
        }
        Ok(Self {
            masks,
            moving,
            noise,
            seed,
            num_frames,
            dims,
        })
    }

    fn motion_evidence(&self, id: u32, t: usize) -> f64 {
        let flags = &self.moving[&id];
        let w = self.noise.window;
        let last = self.num_frames as i64 - 1;
        let start = t as i64 - ((w as i64 - 1) / 2);
        let hits = (0..w as i64)
            .filter(|k| flags[(start + k).clamp(0, last) as usize])
            .count();
        hits as f64 / w as f64
    }
}

impl Proposer for SyntheticProposer {
    fn num_frames(&self) -> usize {
        self.num_frames
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn propose(&mut self, frame: usize) -> Result<FrameProposals> {
        if frame >= self.num_frames {
            return Err(Error::Proposer(format!(
                "frame {frame} beyond {} frames",
                self.num_frames
            )));
        }
        let n = &self.noise;
        let mut rng = rng_for(self.seed, 0x5052_4f50, frame as u64);
        let jitter = |v: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            if n.score_jitter > 0.0 {
                (v + rng.random_range(-n.score_jitter..=n.score_jitter)).clamp(0.0, 1.0)
            } else {
                v
            }
        };
        let mut proposals = Vec::new();
        for (&id, track) in self.masks.iter() {
            let mask = &track[frame];
            if mask.is_empty() {
                continue;
            }
            let evidence = self.motion_evidence(id, frame);
            if evidence == 0.0 && !n.include_static {
                continue;
            }
            if n.drop_prob > 0.0 && rng.random_bool(n.drop_prob) {
                continue;
            }
            let mut mask = mask.clone();
            if n.flip_prob > 0.0 {
                let (h, w) = mask.dims();
                for r in 0..h {
                    for c in 0..w {
                        if rng.random_bool(n.flip_prob) {
                            mask.set(r, c, !mask.get(r, c));
                        }
                    }
                }
            }
            let motion = n.static_motion_score + (n.motion_score - n.static_motion_score) * evidence;
            proposals.push(Proposal {
                mask,
                motion: jitter(motion, &mut rng),
                iou: jitter(n.iou_score, &mut rng),
                confidence: jitter(n.confidence, &mut rng),
            });
        }
        Ok(FrameProposals { frame, proposals })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ScoreEntry {
    motion: f64,
    iou: f64,
    confidence: f64,
}

const SCORES_FILE: &str = "scores.json";

fn mask_name(i: usize) -> String {
    format!("mask_{i:03}.png")
}

fn frame_dir(root: &Path, t: usize) -> PathBuf {
    root.join(format!("{t:05}"))
}

/// Reads proposals from `root/%05d/mask_%03d.png` plus `scores.json` per
/// frame. Frame directories must run contiguously from `00000`.
#[derive(Clone, Debug)]
pub struct FileProposer {
    root: PathBuf,
    num_frames: usize,
    dims: (usize, usize),
}

impl FileProposer {
    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Missing(root.to_path_buf()));
        }
        let mut frames = Vec::new();
        for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if entry.path().is_dir() && !name.is_empty() && name.bytes().all(|b| b.is_ascii_digit()) {
                let t: usize = name
                    .parse()
                    .map_err(|_| Error::schema(root, format!("bad frame directory {name}")))?;
                frames.push(t);
            }
        }
        frames.sort_unstable();
        if frames.is_empty() {
            return Err(Error::schema(root, "no frame directories"));
        }
        if let Some((i, &t)) = frames.iter().enumerate().find(|&(i, &t)| i != t) {
            return Err(Error::schema(
                root,
                format!("frame directories not contiguous: expected {i:05}, found {t:05}"),
            ));
        }
        let mut dims = None;
        for &t in &frames {
            let first = frame_dir(root, t).join(mask_name(0));
            if first.is_file() {
                dims = Some(read_label_map(&first)?.dims());
                break;
            }
        }
        let dims = dims.ok_or_else(|| Error::schema(root, "no proposal masks in any frame"))?;
        Ok(Self {
            root: root.to_path_buf(),
            num_frames: frames.len(),
            dims,
        })
    }
}

impl Proposer for FileProposer {
    fn num_frames(&self) -> usize {
        self.num_frames
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn propose(&mut self, frame: usize) -> Result<FrameProposals> {
        let dir = frame_dir(&self.root, frame);
        let scores_path = dir.join(SCORES_FILE);
        let text = fs::read(&scores_path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Missing(scores_path.clone()),
            _ => Error::io(&scores_path, e),
        })?;
        let scores: Vec<ScoreEntry> =
            serde_json::from_slice(&text).map_err(|e| Error::schema(&scores_path, e.to_string()))?;
        let mut proposals = Vec::with_capacity(scores.len());
        for (i, s) in scores.into_iter().enumerate() {
            let path = dir.join(mask_name(i));
            if !path.is_file() {
                return Err(Error::Missing(path));
            }
            let mask = read_label_map(&path)?.foreground();
            proposals.push(Proposal {
                mask,
                motion: s.motion,
                iou: s.iou,
                confidence: s.confidence,
            });
        }
        if dir.join(mask_name(proposals.len())).exists() {
            return Err(Error::schema(&scores_path, "more mask files than score entries"));
        }
        Ok(FrameProposals { frame, proposals })
    }
}

/// Writes proposals in the layout [`FileProposer`] reads.
pub fn write_proposals(root: &Path, frames: &[FrameProposals]) -> Result<()> {
    for (t, fp) in frames.iter().enumerate() {
        let dir = frame_dir(root, t);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut scores = Vec::with_capacity(fp.proposals.len());
        for (i, p) in fp.proposals.iter().enumerate() {
            let (h, w) = p.mask.dims();
            let labels = p.mask.to_bytes();
            write_label_png(&dir.join(mask_name(i)), &LabelMap::from_raw(h, w, labels)?)?;
            scores.push(ScoreEntry {
                motion: p.motion,
                iou: p.iou,
                confidence: p.confidence,
            });
        }
        let path = dir.join(SCORES_FILE);
        fs::write(&path, serde_json::to_string_pretty(&scores)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Materializes every frame of a proposer.
pub fn read_proposals<P: Proposer + ?Sized>(proposer: &mut P) -> Result<Vec<FrameProposals>> {
    (0..proposer.num_frames()).map(|t| proposer.propose(t)).collect()
}
