//! On-disk dataset layout.
//!
//! A dataset root holds one directory per sequence. Each sequence directory is
//! a mask store (`%05d.png` or `%05d.json`) plus optional sidecars:
//! `annotation.json` on the ground-truth side and `motion.json`
//! (`{"<track id>": [moving frame indices]}`) on the prediction side.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mosi_core::annotations::{expand_flags, IntervalTable};
use mosi_core::mask::list_frames;
use mosi_core::{Error, MaskStore, MotionInterval, MotionSequence, Result, SequenceAnnotation, SequencePrediction};

pub const ANNOTATION_FILE: &str = "annotation.json";
pub const MOTION_FILE: &str = "motion.json";

pub fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Missing(path.to_path_buf()))
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Missing(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Sequence directories under `root`, sorted by name.
pub fn sequences(root: &Path) -> Result<Vec<String>> {
    require_dir(root)?;
    let mut names = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            let name = entry.file_name();
            let name = name
                .to_str()
                .ok_or_else(|| Error::schema(root, "sequence directory name is not UTF-8"))?;
            if !name.starts_with('.') {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::schema(root, "no sequence directories"));
    }
    Ok(names)
}

/// Checks that every ground-truth sequence has a prediction directory before
/// any work starts.
pub fn paired_sequences(gt: &Path, pred: &Path) -> Result<Vec<String>> {
    require_dir(pred)?;
    let names = sequences(gt)?;
    for name in &names {
        require_dir(&pred.join(name))?;
    }
    Ok(names)
}

pub fn load_masks(dir: &Path) -> Result<SequencePrediction> {
    let (_, store) = MaskStore::load(dir)?;
    if store.maps.is_empty() {
        return Err(Error::schema(dir, "no mask frames"));
    }
    SequencePrediction::from_label_maps(store.frames, &store.maps)
}

/// Where ground-truth motion intervals come from.
#[derive(Clone, Debug)]
pub enum IntervalSource {
    /// `annotation.json` in each sequence directory.
    Sidecar,
    Table {
        table: IntervalTable,
        fps: f64,
    },
}

impl IntervalSource {
    /// `frame_count` is only used for table-backed annotations.
    pub fn annotation(&self, dir: &Path, name: &str, frame_count: usize) -> Result<SequenceAnnotation> {
        match self {
            IntervalSource::Sidecar => {
                let path = dir.join(ANNOTATION_FILE);
                SequenceAnnotation::from_json(&read_file(&path)?).map_err(|e| match e {
                    Error::Json(e) => Error::schema(&path, e.to_string()),
                    other => other,
                })
            }
            IntervalSource::Table { table, fps } => {
                let objects: BTreeMap<u32, Vec<MotionInterval>> = table.get(name).cloned().unwrap_or_default();
                SequenceAnnotation::new(name.to_string(), *fps, frame_count, objects)
            }
        }
    }
}

/// Ground truth with per-frame motion flags from the annotation. Frames where
/// an object is invisible count as static.
pub fn load_gt(dir: &Path, name: &str, source: &IntervalSource) -> Result<MotionSequence> {
    let masks = load_masks(dir)?;
    let ann = source.annotation(dir, name, frame_count(&masks))?;
    ground_truth(masks, &ann)
}

pub fn frame_count(masks: &SequencePrediction) -> usize {
    masks.frames().last().map_or(0, |&f| f + 1)
}

/// Frame count of a store from its file names alone.
pub fn store_frame_count(dir: &Path) -> Result<usize> {
    let (_, files) = list_frames(dir)?;
    Ok(files.last().map_or(0, |f| f.frame + 1))
}

pub fn ground_truth(masks: SequencePrediction, ann: &SequenceAnnotation) -> Result<MotionSequence> {
    let flags = expand_flags(ann);
    let moving = masks
        .objects()
        .iter()
        .map(|(id, track)| {
            let row = flags.get(id);
            let flags = masks
                .frames()
                .iter()
                .zip(track)
                .map(|(&f, m)| row.and_then(|r| r.get(f)).copied().unwrap_or(false) && !m.is_empty())
                .collect();
            (*id, flags)
        })
        .collect();
    MotionSequence::ground_truth(masks, moving)
}

pub fn load_pred(dir: &Path) -> Result<MotionSequence> {
    let masks = load_masks(dir)?;
    let path = dir.join(MOTION_FILE);
    let moving: BTreeMap<u32, Vec<usize>> =
        serde_json::from_slice(&read_file(&path)?).map_err(|e| Error::schema(&path, e.to_string()))?;
    MotionSequence::from_moving_frames(masks, &moving)
}

pub fn load_table(path: &Path) -> Result<IntervalTable> {
    mosi_core::annotations::parse_intervals(&read_file(path)?)
}

pub fn interval_source(intervals: Option<&PathBuf>, fps: Option<f64>) -> Result<IntervalSource> {
    match (intervals, fps) {
        (None, None) => Ok(IntervalSource::Sidecar),
        (Some(path), Some(fps)) => {
            if !(fps.is_finite() && fps > 0.0) {
                return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
            }
            Ok(IntervalSource::Table {
                table: load_table(path)?,
                fps,
            })
        }
        (Some(_), None) => Err(Error::InvalidInput("--intervals needs --fps".into())),
        (None, Some(_)) => Err(Error::InvalidInput("--fps only applies with --intervals".into())),
    }
}
