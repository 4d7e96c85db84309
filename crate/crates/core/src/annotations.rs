//! Per-object motion interval annotations.
//!
//! Intervals are half-open `[start, end)` in seconds. A frame `t` counts as
//! moving when its midpoint time `(t + 0.5) / fps` falls inside an interval.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SequencePrediction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct MotionInterval {
    pub start: f64,
    pub end: f64,
}

impl MotionInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite interval [{start}, {end})")));
        }
        if start < 0.0 {
            return Err(Error::InvalidInput(format!("negative start time {start}")));
        }
        if start >= end {
            return Err(Error::InvalidInput(format!("empty interval [{start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

impl From<MotionInterval> for [f64; 2] {
    fn from(i: MotionInterval) -> Self {
        [i.start, i.end]
    }
}

impl TryFrom<[f64; 2]> for MotionInterval {
    type Error = Error;
    fn try_from([s, e]: [f64; 2]) -> Result<Self> {
        MotionInterval::new(s, e)
    }
}

/// Sorts and merges overlapping or touching intervals.
pub fn normalize(mut intervals: Vec<MotionInterval>) -> Vec<MotionInterval> {
    intervals.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut out: Vec<MotionInterval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// Parsed interval rows: sequence id → object id → normalized intervals.
///
/// An object present with an empty list was declared but never moves.
pub type IntervalTable = BTreeMap<String, BTreeMap<u32, Vec<MotionInterval>>>;

const CANONICAL_HEADER: [&str; 4] = ["sequence_id", "object_id", "t_start", "t_end"];

enum Schema {
    Canonical {
        seq: usize,
        obj: usize,
        start: usize,
        end: usize,
    },
    Via {
        files: usize,
        temporal: usize,
        metadata: usize,
    },
}

impl Schema {
    fn detect(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        if let (Some(seq), Some(obj), Some(start), Some(end)) =
            (find("sequence_id"), find("object_id"), find("t_start"), find("t_end"))
        {
            return Ok(Schema::Canonical { seq, obj, start, end });
        }
        if let (Some(files), Some(temporal), Some(metadata)) =
            (find("file_list"), find("temporal_coordinates"), find("metadata"))
        {
            return Ok(Schema::Via {
                files,
                temporal,
                metadata,
            });
        }
        Err(Error::Csv {
            line: 1,
            message: "unrecognized header; expected sequence_id,object_id,t_start,t_end \
                      or a VIA export with file_list,temporal_coordinates,metadata"
                .into(),
        })
    }
}

/// VIA writes its header as a `# CSV_HEADER = ...` comment. Comment lines are
/// blanked rather than removed so reported line numbers stay correct.
fn preprocess(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some(h) = rest.trim_start().strip_prefix("CSV_HEADER") {
                out.push_str(h.trim_start().trim_start_matches('=').trim_start());
            }
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

fn parse_time(field: &str, line: u64, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Csv {
            line,
            message: format!("{what}: not a number: {field:?}"),
        })
}

fn checked_interval(s: f64, e: f64, line: u64) -> Result<MotionInterval> {
    MotionInterval::new(s, e).map_err(|err| Error::Csv {
        line,
        message: match err {
            Error::InvalidInput(m) => m,
            other => other.to_string(),
        },
    })
}

fn digits_id(s: &str) -> Option<u32> {
    let digits: String = s
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().ok()
}

fn via_row(
    rec: &csv::StringRecord,
    line: u64,
    files: usize,
    temporal: usize,
    metadata: usize,
) -> Result<(String, u32, Option<MotionInterval>)> {
    let bad = |message: String| Error::Csv { line, message };
    let file_list: Vec<String> = serde_json::from_str(&rec[files]).map_err(|e| bad(format!("file_list: {e}")))?;
    let first = file_list.first().ok_or_else(|| bad("file_list is empty".into()))?;
    let name = first.rsplit(['/', '\\']).next().unwrap_or(first);
    let seq = name.rsplit_once('.').map_or(name, |(stem, _)| stem).to_string();

    let coords: Vec<f64> =
        serde_json::from_str(&rec[temporal]).map_err(|e| bad(format!("temporal_coordinates: {e}")))?;
    let interval = match coords.as_slice() {
        [] => None,
        [s, e] => Some(checked_interval(*s, *e, line)?),
        other => return Err(bad(format!("expected [start, end], got {} values", other.len()))),
    };

    let meta: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&rec[metadata]).map_err(|e| bad(format!("metadata: {e}")))?;
    let object = meta
        .values()
        .find_map(|v| match v {
            serde_json::Value::String(s) => digits_id(s),
            serde_json::Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
            _ => None,
        })
        .ok_or_else(|| bad("metadata carries no object id".into()))?;
    Ok((seq, object, interval))
}

/// Parses interval rows in the canonical four-column schema or a VIA export.
pub fn parse_intervals(bytes: &[u8]) -> Result<IntervalTable> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Csv {
        line: 1,
        message: format!("not UTF-8: {e}"),
    })?;
    let text = preprocess(text);
    let mut table: IntervalTable = BTreeMap::new();
    if text.trim().is_empty() {
        return Ok(table);
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let schema = Schema::detect(&header)?;

    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let (seq, object, interval) = match schema {
            Schema::Canonical { seq, obj, start, end } => {
                let sequence = rec[seq].trim().to_string();
                if sequence.is_empty() {
                    return Err(Error::Csv {
                        line,
                        message: "empty sequence_id".into(),
                    });
                }
                let object = rec[obj].trim().parse::<u32>().map_err(|_| Error::Csv {
                    line,
                    message: format!("object_id: not an integer: {:?}", &rec[obj]),
                })?;
                let (s, e) = (rec[start].trim(), rec[end].trim());
                let interval = match (s.is_empty(), e.is_empty()) {
                    (true, true) => None,
                    (false, false) => Some(checked_interval(
                        parse_time(s, line, "t_start")?,
                        parse_time(e, line, "t_end")?,
                        line,
                    )?),
                    _ => {
                        return Err(Error::Csv {
                            line,
                            message: "t_start and t_end must both be set or both empty".into(),
                        })
                    }
                };
                (sequence, object, interval)
            }
            Schema::Via {
                files,
                temporal,
                metadata,
            } => via_row(&rec, line, files, temporal, metadata)?,
        };
        let list = table.entry(seq).or_default().entry(object).or_default();
        list.extend(interval);
    }

    for objects in table.values_mut() {
        for list in objects.values_mut() {
            *list = normalize(std::mem::take(list));
        }
    }
    Ok(table)
}

/// Writes the canonical CSV form. Objects without intervals get one row with
/// empty times so they survive a round trip.
pub fn serialize_intervals(table: &IntervalTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // Writing to a Vec cannot fail.
    w.write_record(CANONICAL_HEADER).unwrap();
    for (seq, objects) in table {
        for (id, list) in objects {
            if list.is_empty() {
                w.write_record([seq.as_str(), &id.to_string(), "", ""]).unwrap();
            }
            for iv in list {
                w.write_record([
                    seq.as_str(),
                    &id.to_string(),
                    &iv.start.to_string(),
                    &iv.end.to_string(),
                ])
                .unwrap();
            }
        }
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceAnnotation {
    pub sequence: String,
    pub fps: f64,
    pub frame_count: usize,
    pub objects: BTreeMap<u32, Vec<MotionInterval>>,
}

impl SequenceAnnotation {
    pub fn new(
        sequence: impl Into<String>,
        fps: f64,
        frame_count: usize,
        objects: BTreeMap<u32, Vec<MotionInterval>>,
    ) -> Result<Self> {
        let ann = Self {
            sequence: sequence.into(),
            fps,
            frame_count,
            objects: objects.into_iter().map(|(k, v)| (k, normalize(v))).collect(),
        };
        ann.validate()?;
        Ok(ann)
    }

    /// Builds one annotation per sequence of a parsed table.
    pub fn from_table(table: IntervalTable, fps: f64, frame_counts: &BTreeMap<String, usize>) -> Result<Vec<Self>> {
        table
            .into_iter()
            .map(|(seq, objects)| {
                let n = *frame_counts
                    .get(&seq)
                    .ok_or_else(|| Error::InvalidInput(format!("no frame count for sequence {seq}")))?;
                Self::new(seq, fps, n, objects)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {}", self.fps)));
        }
        for list in self.objects.values() {
            for iv in list {
                MotionInterval::new(iv.start, iv.end)?;
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.frame_count as f64 / self.fps
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let ann: Self = serde_json::from_slice(bytes)?;
        let ann = Self::new(ann.sequence, ann.fps, ann.frame_count, ann.objects)?;
        Ok(ann)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation serializes")
    }
}

/// Per-object per-frame motion flags by frame-midpoint sampling.
pub fn expand_flags(ann: &SequenceAnnotation) -> BTreeMap<u32, Vec<bool>> {
    ann.objects
        .iter()
        .map(|(&id, list)| {
            let flags = (0..ann.frame_count)
                .map(|t| {
                    let mid = (t as f64 + 0.5) / ann.fps;
                    list.iter().any(|iv| iv.contains(mid))
                })
                .collect();
            (id, flags)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub object: u32,
    pub frame: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub sequence: String,
    /// Frames flagged moving whose mask is empty or missing.
    pub violations: Vec<Violation>,
    /// Every annotated object moves on every frame.
    pub all_moving_throughout: bool,
    /// Stop-and-go content: per-frame motion labels are required.
    pub needs_tfa: bool,
    /// Annotated objects with no motion interval at all.
    pub never_moving: Vec<u32>,
    /// Objects with masks but no annotation entry.
    pub unannotated: Vec<u32>,
    pub consistent: bool,
}

/// Checks an annotation against its ground-truth masks.
///
/// Masks are looked up by frame number; a frame absent from the store counts
/// as an empty mask. Invisible objects are allowed to be static, so masks on
/// unflagged frames are never required.
pub fn validate_curation(ann: &SequenceAnnotation, masks: &SequencePrediction) -> CurationReport {
    let flags = expand_flags(ann);
    let position: BTreeMap<usize, usize> = masks.frames().iter().enumerate().map(|(i, &f)| (f, i)).collect();

    let mut violations = Vec::new();
    for (&id, row) in &flags {
        let track = masks.objects().get(&id);
        for (t, _) in row.iter().enumerate().filter(|(_, &m)| m) {
            let nonempty = match (track, position.get(&t)) {
                (Some(track), Some(&i)) => !track[i].is_empty(),
                _ => false,
            };
            if !nonempty {
                violations.push(Violation { object: id, frame: t });
            }
        }
    }

    let all_moving_throughout = flags.values().all(|row| row.iter().all(|&m| m));
    let never_moving = ann
        .objects
        .iter()
        .filter(|(_, list)| list.is_empty())
        .map(|(&id, _)| id)
        .collect();
    let unannotated = masks
        .objects()
        .keys()
        .filter(|id| !ann.objects.contains_key(id))
        .copied()
        .collect();
    CurationReport {
        sequence: ann.sequence.clone(),
        consistent: violations.is_empty(),
        violations,
        all_moving_throughout,
        needs_tfa: !all_moving_throughout,
        never_moving,
        unannotated,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectProportion {
    pub sequence: String,
    pub object: u32,
    pub proportion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub videos: usize,
    pub frames: usize,
    pub objects: usize,
    /// Objects with at least one moving frame.
    pub moving_objects: usize,
    pub videos_needing_tfa: usize,
    /// Number of moving objects in a video → number of videos.
    pub moving_objects_per_video: BTreeMap<usize, usize>,
    /// Ten equal bins over [0, 1]; the last bin includes 1.0.
    pub motion_proportion_histogram: Vec<HistogramBin>,
    pub proportions: Vec<ObjectProportion>,
}

pub const PROPORTION_BINS: usize = 10;

pub fn dataset_stats(anns: &[SequenceAnnotation]) -> Result<DatasetStats> {
    if anns.is_empty() {
        return Err(Error::InvalidInput("no annotations".into()));
    }
    let mut bins: Vec<HistogramBin> = (0..PROPORTION_BINS)
        .map(|i| HistogramBin {
            lo: i as f64 / PROPORTION_BINS as f64,
            hi: (i + 1) as f64 / PROPORTION_BINS as f64,
            count: 0,
        })
        .collect();
    let mut per_video = BTreeMap::new();
    let mut proportions = Vec::new();
    let (mut frames, mut objects, mut moving_objects, mut needing_tfa) = (0, 0, 0, 0);

    for ann in anns {
        let flags = expand_flags(ann);
        frames += ann.frame_count;
        objects += flags.len();
        let mut moving_here = 0;
        for (&id, row) in &flags {
            let moving = row.iter().filter(|&&m| m).count();
            let proportion = if row.is_empty() {
                0.0
            } else {
                moving as f64 / row.len() as f64
            };
            if moving > 0 {
                moving_here += 1;
            }
            let bin = ((proportion * PROPORTION_BINS as f64) as usize).min(PROPORTION_BINS - 1);
            bins[bin].count += 1;
            proportions.push(ObjectProportion {
                sequence: ann.sequence.clone(),
                object: id,
                proportion,
            });
        }
        if !flags.values().all(|row| row.iter().all(|&m| m)) {
            needing_tfa += 1;
        }
        moving_objects += moving_here;
        *per_video.entry(moving_here).or_insert(0) += 1;
    }

    Ok(DatasetStats {
        videos: anns.len(),
        frames,
        objects,
        moving_objects,
        videos_needing_tfa: needing_tfa,
        moving_objects_per_video: per_video,
        motion_proportion_histogram: bins,
        proportions,
    })
}

/// Per-object proportions as a CSV table.
pub fn proportions_csv(stats: &DatasetStats) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sequence_id", "object_id", "motion_proportion"])
        .unwrap();
    for p in &stats.proportions {
        w.write_record([p.sequence.as_str(), &p.object.to_string(), &p.proportion.to_string()])
            .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;
    use proptest::prelude::*;

    fn iv(s: f64, e: f64) -> MotionInterval {
        MotionInterval::new(s, e).unwrap()
    }

    fn ann(objects: Vec<(u32, Vec<MotionInterval>)>, fps: f64, n: usize) -> SequenceAnnotation {
        SequenceAnnotation::new("s", fps, n, objects.into_iter().collect()).unwrap()
    }

    #[test]
    fn adjacent_and_overlapping_intervals_merge() {
        let csv = "sequence_id,object_id,t_start,t_end\na,1,0,2\na,1,2,5\na,2,2,6\na,2,1,3\n";
        let t = parse_intervals(csv.as_bytes()).unwrap();
        assert_eq!(t["a"][&1], vec![iv(0.0, 5.0)]);
        assert_eq!(t["a"][&2], vec![iv(1.0, 6.0)]);
    }

    #[test]
    fn empty_body_and_static_objects() {
        let t = parse_intervals(b"sequence_id,object_id,t_start,t_end\n").unwrap();
        assert!(t.is_empty());
        let t = parse_intervals(b"sequence_id,object_id,t_start,t_end\nb,4,,\n").unwrap();
        assert_eq!(t["b"][&4], vec![]);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let head = "sequence_id,object_id,t_start,t_end\n";
        for (body, needle) in [
            ("a,1,0,1\na,1,-1,2\n", "negative"),
            ("a,1,0,1\na,1,3,3\n", "empty interval"),
            ("a,1,0,1\na,x,0,1\n", "object_id"),
            ("a,1,0,1\na,1,zero,1\n", "t_start"),
            ("a,1,0,1\na,1,0\n", ""),
        ] {
            let err = parse_intervals(format!("{head}{body}").as_bytes()).unwrap_err();
            match err {
                Error::Csv { line, message } => {
                    assert_eq!(line, 3, "{body}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("{other}"),
            }
        }
        assert!(parse_intervals(b"a,b,c\n1,2,3\n").is_err());
    }

    #[test]
    fn via_export_adapter() {
        let csv = concat!(
            "# Exported using VGG Image Annotator\n",
            "# CSV_HEADER = metadata_id,file_list,flags,temporal_coordinates,spatial_coordinates,metadata\n",
            "\"1_a\",\"[\"\"videos/bear.mp4\"\"]\",0,\"[1.5, 3]\",\"[]\",\"{\"\"1\"\":\"\"object_2\"\"}\"\n",
            "\"1_b\",\"[\"\"videos/bear.mp4\"\"]\",0,\"[2.5, 4.25]\",\"[]\",\"{\"\"1\"\":\"\"object_2\"\"}\"\n",
            "\"1_c\",\"[\"\"bear.mp4\"\"]\",0,\"[]\",\"[]\",\"{\"\"1\"\":\"\"3\"\"}\"\n",
        );
        let t = parse_intervals(csv.as_bytes()).unwrap();
        assert_eq!(t["bear"][&2], vec![iv(1.5, 4.25)]);
        assert_eq!(t["bear"][&3], vec![]);
        let bad = csv.replace("[2.5, 4.25]", "[4.5, 4.25]");
        match parse_intervals(bad.as_bytes()).unwrap_err() {
            Error::Csv { line, .. } => assert_eq!(line, 4),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn serialize_is_a_fixed_point() {
        let csv = "sequence_id,object_id,t_start,t_end\nz,2,0.1,0.30000000000000004\na,1,2,5\na,1,0,2\na,7,,\n";
        let t1 = parse_intervals(csv.as_bytes()).unwrap();
        let s1 = serialize_intervals(&t1);
        let t2 = parse_intervals(s1.as_bytes()).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(s1, serialize_intervals(&t2));
    }

    #[test]
    fn midpoint_expansion() {
        let a = ann(
            vec![(1, vec![iv(0.5, 1.5)]), (2, vec![]), (3, vec![iv(0.0, 10.0)])],
            2.0,
            4,
        );
        let f = expand_flags(&a);
        assert_eq!(f[&1], vec![false, true, true, false]);
        assert_eq!(f[&2], vec![false; 4]);
        assert_eq!(f[&3], vec![true; 4]);
    }

    #[test]
    fn json_shape() {
        let a = ann(vec![(1, vec![iv(0.0, 2.0)])], 24.0, 48);
        let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(v["objects"]["1"], serde_json::json!([[0.0, 2.0]]));
        assert_eq!(SequenceAnnotation::from_json(a.to_json().as_bytes()).unwrap(), a);
        assert!(
            SequenceAnnotation::from_json(br#"{"sequence":"s","fps":1,"frame_count":2,"objects":{"1":[[2,1]]}}"#)
                .is_err()
        );
    }

    fn masks(n: usize, present: &[(u32, &[bool])]) -> SequencePrediction {
        let objects = present
            .iter()
            .map(|&(id, on)| {
                let track = (0..n)
                    .map(|t| {
                        let mut m = BinaryMask::new(4, 4).unwrap();
                        if on[t] {
                            m.set(id as usize % 4, 1, true);
                        }
                        m
                    })
                    .collect();
                (id, track)
            })
            .collect();
        SequencePrediction::new((0..n).collect(), (4, 4), objects).unwrap()
    }

    #[test]
    fn curation_checks() {
        let full = [true; 4];
        let a = ann(vec![(1, vec![iv(0.0, 4.0)]), (2, vec![iv(0.0, 4.0)])], 1.0, 4);
        let r = validate_curation(&a, &masks(4, &[(1, &full), (2, &full)]));
        assert!(r.all_moving_throughout && !r.needs_tfa && r.consistent);

        let r = validate_curation(&a, &masks(4, &[(1, &full), (2, &[true, false, true, true])]));
        assert_eq!(r.violations, vec![Violation { object: 2, frame: 1 }]);
        assert!(!r.consistent);

        // Walks, pauses, walks again.
        let stop_go = ann(vec![(1, vec![iv(0.0, 2.0), iv(3.0, 4.0)]), (5, vec![])], 1.0, 4);
        let r = validate_curation(&stop_go, &masks(4, &[(1, &full), (5, &full), (9, &full)]));
        assert!(!r.all_moving_throughout && r.needs_tfa && r.consistent);
        assert_eq!(r.never_moving, vec![5]);
        assert_eq!(r.unannotated, vec![9]);
    }

    #[test]
    fn stats_hand_tally() {
        let set = vec![
            SequenceAnnotation::new("a", 1.0, 4, [(1, vec![iv(0.0, 4.0)])].into()).unwrap(),
            SequenceAnnotation::new("b", 1.0, 4, [(1, vec![iv(0.0, 2.0)]), (2, vec![])].into()).unwrap(),
            SequenceAnnotation::new("c", 2.0, 10, [(1, vec![iv(0.0, 1.0)]), (3, vec![iv(1.0, 5.0)])].into()).unwrap(),
        ];
        let s = dataset_stats(&set).unwrap();
        assert_eq!((s.videos, s.frames, s.objects, s.moving_objects), (3, 18, 5, 4));
        assert_eq!(s.videos_needing_tfa, 2);
        assert_eq!(s.moving_objects_per_video, BTreeMap::from([(1, 2), (2, 1)]));
        let props: Vec<f64> = s.proportions.iter().map(|p| p.proportion).collect();
        assert_eq!(props, vec![1.0, 0.5, 0.0, 0.2, 0.8]);
        let counts: Vec<usize> = s.motion_proportion_histogram.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![1, 0, 1, 0, 0, 1, 0, 0, 1, 1]);
        assert!(dataset_stats(&[]).is_err());
        assert!(proportions_csv(&s).starts_with("sequence_id,object_id,motion_proportion\na,1,1\n"));
    }

    proptest! {
        #[test]
        fn merged_intervals_are_sorted_and_disjoint(raw in prop::collection::vec((0u32..100, 1u32..20), 0..12)) {
            let list: Vec<_> = raw.iter().map(|&(s, l)| iv(s as f64 / 4.0, (s + l) as f64 / 4.0)).collect();
            let merged = normalize(list.clone());
            for w in merged.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            for x in 0..480 {
                let t = x as f64 / 16.0;
                prop_assert_eq!(list.iter().any(|i| i.contains(t)), merged.iter().any(|i| i.contains(t)));
            }
        }

        #[test]
        fn proportion_tracks_interval_length(
            n in 1usize..200,
            fps in prop::sample::select(vec![1.0, 6.0, 24.0, 25.0, 29.97, 30.0]),
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let duration = n as f64 / fps;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi > lo);
            let interval = iv(lo * duration, hi * duration);
            let x = ann(vec![(1, vec![interval])], fps, n);
            let flags = &expand_flags(&x)[&1];
            let proportion = flags.iter().filter(|&&m| m).count() as f64 / n as f64;
            let expected = interval.len() / duration;
            prop_assert!((proportion - expected).abs() <= 1.0 / n as f64 + 1e-12);
        }
    }
}
