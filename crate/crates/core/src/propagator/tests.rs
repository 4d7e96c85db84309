use super::*;
use crate::metrics::{eval_mosi, MosiConfig};

fn rect(h: usize, w: usize, r0: i64, c0: i64, r1: i64, c1: i64) -> BinaryMask {
    let mut m = BinaryMask::new(h, w).unwrap();
    m.fill_rect(r0, c0, r1, c1);
    m
}

fn prop(mask: BinaryMask, motion: f64, iou: f64) -> Proposal {
    Proposal {
        mask,
        motion,
        iou,
        confidence: 0.5,
    }
}

/// Proposer with fixed per-frame output.
struct Scripted {
    frames: Vec<Vec<Proposal>>,
    dims: (usize, usize),
    calls: Vec<usize>,
}

impl Scripted {
    fn new(dims: (usize, usize), frames: Vec<Vec<Proposal>>) -> Self {
        Self {
            frames,
            dims,
            calls: Vec::new(),
        }
    }
}

impl Proposer for Scripted {
    fn num_frames(&self) -> usize {
        self.frames.len()
    }
    fn dims(&self) -> (usize, usize) {
        self.dims
    }
    fn propose(&mut self, frame: usize) -> Result<FrameProposals> {
        self.calls.push(frame);
        Ok(FrameProposals {
            frame,
            proposals: self.frames[frame].clone(),
        })
    }
}

fn carry() -> CarryoverTracker {
    CarryoverTracker::new()
}

#[test]
fn empty_proposals_keep_the_track_static() {
    let m = rect(8, 8, 1, 1, 3, 3);
    let mut p = Scripted::new((8, 8), vec![vec![]; 4]);
    let mut state = TrackerState::new(carry());
    state
        .init(vec![Prompt {
            frame: 0,
            track: 1,
            mask: m.clone(),
        }])
        .unwrap();
    let out = prop_step(
        &mut state,
        1,
        Direction::Forward,
        true,
        &mut p,
        &PropagatorConfig::default(),
    )
    .unwrap();
    assert!(out.get(1, 0).is_none());
    for t in 1..4 {
        let f = out.get(1, t).unwrap();
        assert_eq!(f.mask, m);
        assert!(!f.moving);
        assert_eq!(f.quality, 0.0);
    }
    assert_eq!(p.calls, vec![1, 2, 3]);
}

#[test]
fn identical_proposal_reinforces() {
    let m = rect(8, 8, 1, 1, 3, 3);
    let mut p = Scripted::new((8, 8), vec![vec![prop(m.clone(), 0.9, 0.9)]]);
    let mut state = TrackerState::new(carry());
    state
        .init(vec![Prompt {
            frame: 0,
            track: 1,
            mask: m.clone(),
        }])
        .unwrap();
    let out = prop_step(
        &mut state,
        0,
        Direction::Forward,
        true,
        &mut p,
        &PropagatorConfig::default(),
    )
    .unwrap();
    assert!(out.get(1, 0).unwrap().moving);
    assert_eq!(state.prompts().len(), 2);
    assert_eq!(state.tracks().len(), 1);
}

#[test]
fn disjoint_proposal_starts_a_track() {
    let m = rect(8, 8, 1, 1, 3, 3);
    let other = rect(8, 8, 5, 5, 7, 7);
    let mut p = Scripted::new((8, 8), vec![vec![prop(other.clone(), 0.9, 0.9)]]);
    let mut state = TrackerState::new(carry());
    state
        .init(vec![Prompt {
            frame: 0,
            track: 1,
            mask: m,
        }])
        .unwrap();
    let out = prop_step(
        &mut state,
        0,
        Direction::Forward,
        true,
        &mut p,
        &PropagatorConfig::default(),
    )
    .unwrap();
    assert_eq!(state.tracks().iter().copied().collect::<Vec<_>>(), vec![1, 2]);
    let f = out.get(2, 0).unwrap();
    assert!(f.moving);
    assert_eq!(f.mask, other);
    assert!(!out.get(1, 0).unwrap().moving);
}

#[test]
fn unconfident_proposals_never_seed() {
    let cfg = PropagatorConfig::default();
    let m = rect(8, 8, 5, 5, 7, 7);
    for (motion, iou) in [(0.5, 0.9), (0.9, 0.7), (0.2, 0.2)] {
        let mut p = Scripted::new((8, 8), vec![vec![prop(m.clone(), motion, iou)]; 3]);
        let out = run_online(&mut p, &carry, &cfg).unwrap();
        assert!(out.is_empty(), "{motion} {iou}");
    }
}

#[test]
fn overlapping_seeds_in_one_frame_keep_the_most_confident() {
    let big = rect(8, 8, 0, 0, 5, 5);
    let inner = rect(8, 8, 1, 1, 3, 3);
    let apart = rect(8, 8, 7, 7, 7, 7);
    let frame = vec![
        prop(inner.clone(), 0.9, 0.8),
        prop(apart.clone(), 0.9, 0.8),
        prop(big.clone(), 0.9, 0.95),
    ];
    let mut p = Scripted::new((8, 8), vec![frame]);
    let out = run_online(&mut p, &carry, &PropagatorConfig::default()).unwrap();
    // Ids follow proposal order among the survivors.
    let masks: Vec<_> = out
        .tracks()
        .keys()
        .map(|&id| out.get(id, 0).unwrap().mask.clone())
        .collect();
    assert_eq!(masks, vec![apart, big]);
}

#[test]
fn late_first_proposal_starts_late() {
    let m = rect(8, 8, 2, 2, 4, 4);
    let mut frames = vec![vec![]; 6];
    for f in frames.iter_mut().skip(4) {
        f.push(prop(m.clone(), 0.9, 0.9));
    }
    let mut p = Scripted::new((8, 8), frames);
    let out = run_online(&mut p, &carry, &PropagatorConfig::default()).unwrap();
    assert_eq!(out.tracks().len(), 1);
    for t in 0..4 {
        assert!(out.get(1, t).is_none());
    }
    assert!(out.get(1, 4).unwrap().moving && out.get(1, 5).unwrap().moving);
}

fn scenario(frames: usize, objects: &str) -> Scenario {
    Scenario::from_json(
        format!(r#"{{"height": 24, "width": 32, "frame_count": {frames}, "objects": [{objects}]}}"#).as_bytes(),
    )
    .unwrap()
}

fn moving_flags(out: &TrackOutput, id: TrackId) -> Vec<bool> {
    (0..out.num_frames())
        .map(|t| out.get(id, t).is_some_and(|f| f.moving))
        .collect()
}

const MOVE_THEN_STOP: &str = r#"{"id": 1, "shape": "rect", "motion": [[0, 3]], "keyframes": [
    {"frame": 0, "center": [12, 6], "size": [6, 6]}, {"frame": 2, "center": [12, 14], "size": [6, 6]}]}"#;

const STOP_THEN_MOVE: &str = r#"{"id": 1, "shape": "ellipse", "motion": [[3, 6]], "keyframes": [
    {"frame": 2, "center": [12, 6], "size": [7, 9]}, {"frame": 5, "center": [12, 20], "size": [7, 9]}]}"#;

#[test]
fn move_then_stop_online() {
    let s = scenario(6, MOVE_THEN_STOP);
    let (mut p, factory) = s.simulation().unwrap();
    let out = run_online(&mut p, &factory, &PropagatorConfig::default()).unwrap();
    assert_eq!(moving_flags(&out, 1), vec![true, true, true, false, false, false]);
    let gt = s.ground_truth().unwrap();
    for t in 0..6 {
        assert_eq!(out.get(1, t).unwrap().mask, gt.tracks().objects()[&1][t]);
    }
}

#[test]
fn stop_then_move_online_misses_the_start_offline_recovers_it() {
    let s = scenario(6, STOP_THEN_MOVE);
    let gt = s.ground_truth().unwrap();
    let cfg = PropagatorConfig::default();
    let (mut p, factory) = s.simulation().unwrap();
    let online = run_online(&mut p, &factory, &cfg).unwrap();
    for t in 0..3 {
        assert!(online.get(1, t).is_none());
    }
    let offline = run_offline(&mut p, &factory, &cfg).unwrap();
    for t in 0..6 {
        assert_eq!(
            offline.get(1, t).unwrap().mask,
            gt.tracks().objects()[&1][t],
            "frame {t}"
        );
    }
    assert_eq!(moving_flags(&offline, 1), vec![false, false, false, true, true, true]);
    let report = eval_mosi(&offline.to_motion_sequence().unwrap(), &gt, &MosiConfig::default()).unwrap();
    assert_eq!(report.mt_iou, 100.0);
    assert_eq!(report.fp_count, 0.0);
}

#[test]
fn scenario_without_objects_is_empty() {
    let s = scenario(3, "");
    let (mut p, factory) = s.simulation().unwrap();
    assert!(run_offline(&mut p, &factory, &PropagatorConfig::default())
        .unwrap()
        .is_empty());
}

#[test]
fn single_frame_offline_equals_online() {
    let s = scenario(1, MOVE_THEN_STOP);
    let cfg = PropagatorConfig::default();
    let (mut p, factory) = s.simulation().unwrap();
    let online = run_online(&mut p, &factory, &cfg).unwrap();
    let offline = run_offline(&mut p, &factory, &cfg).unwrap();
    assert!(!online.is_empty());
    assert_eq!(online, offline);
}

#[test]
fn all_static_video_is_empty_offline() {
    let s = scenario(
        5,
        r#"{"id": 3, "shape": "rect", "keyframes": [{"frame": 0, "center": [5, 5], "size": [4, 4]}]}"#,
    );
    let (mut p, factory) = s.simulation().unwrap();
    let out = run_offline(&mut p, &factory, &PropagatorConfig::default()).unwrap();
    assert!(out.is_empty());
    assert_eq!(out.num_frames(), 5);
}

fn quality_track(qualities: &[f64]) -> TrackOutput {
    let mut out = TrackOutput::empty(qualities.len(), (4, 4));
    let m = rect(4, 4, 0, 0, 1, 1);
    for (t, &q) in qualities.iter().enumerate() {
        let mut tracks = BTreeMap::new();
        tracks.insert(
            1,
            TrackFrame {
                mask: m.clone(),
                moving: true,
                quality: q,
            },
        );
        out.record(&FrameOutput { frame: t, tracks });
    }
    out
}

#[test]
fn topk_selection() {
    let cfg = PropagatorConfig::default();
    let q = [0.5, 0.99, 0.5, 0.99, 0.5, 0.5, 0.99, 0.5, 0.5, 0.5];
    let frames: Vec<usize> = select_topk(&quality_track(&q), &cfg).iter().map(|p| p.frame).collect();
    assert_eq!(frames, vec![1]);

    let frames: Vec<usize> = select_topk(&quality_track(&[0.8, 0.9, 0.85]), &cfg)
        .iter()
        .map(|p| p.frame)
        .collect();
    assert_eq!(frames, vec![1]);

    assert!(select_topk(&quality_track(&[0.7, 0.6, 0.1]), &cfg).is_empty());

    // 0.1 * 30 must keep exactly 3 frames.
    let q = vec![0.99; 30];
    assert_eq!(select_topk(&quality_track(&q), &cfg).len(), 3);
}

#[test]
fn anchor_prefers_the_earliest_maximum() {
    let cfg = PropagatorConfig::default();
    assert_eq!(anchor_frame(&quality_track(&[0.5, 0.9, 0.8, 0.9]), &cfg), Some(1));
    assert_eq!(anchor_frame(&quality_track(&[0.5, 0.6]), &cfg), None);
}

#[test]
fn offline_passes_do_not_add_prompts() {
    let s = scenario(6, STOP_THEN_MOVE);
    let cfg = PropagatorConfig::default();
    let (mut p, factory) = s.simulation().unwrap();
    let online = run_online(&mut p, &factory, &cfg).unwrap();
    let prompts = select_topk(&online, &cfg);
    let anchor = anchor_frame(&online, &cfg).unwrap();
    let mut state = TrackerState::new(factory());
    state.init(prompts.clone()).unwrap();
    prop_step(&mut state, anchor, Direction::Forward, false, &mut p, &cfg).unwrap();
    prop_step(&mut state, anchor, Direction::Backward, false, &mut p, &cfg).unwrap();
    assert_eq!(state.prompts(), prompts.as_slice());
}

#[test]
fn online_output_is_causal() {
    let s = Scenario::from_json(
        br#"{"height": 24, "width": 32, "frame_count": 10, "seed": 5,
        "proposer": {"score_jitter": 0.1, "drop_prob": 0.2, "flip_prob": 0.01, "include_static": true},
        "tracker": {"flip_prob": 0.02},
        "objects": [
          {"id": 1, "shape": "rect", "motion": [[1, 4], [6, 9]], "keyframes": [{"frame": 0, "center": [8, 8], "size": [6, 8]}, {"frame": 9, "center": [14, 20], "size": [6, 8]}]},
          {"id": 2, "shape": "ellipse", "appear": 3, "motion": [[3, 10]], "keyframes": [{"frame": 0, "center": [16, 24], "size": [8, 8]}]}
        ]}"#,
    )
    .unwrap();
    let cfg = PropagatorConfig::default();
    let (p, factory) = s.simulation().unwrap();
    let mut streamed = Vec::new();
    let full = run_online_with(&mut p.clone(), &factory, &cfg, &mut |f| streamed.push(f.clone())).unwrap();
    for (t, f) in streamed.iter().enumerate() {
        assert_eq!(f, &full.frame(t));
    }
    for len in 1..10 {
        let mut prefix = Prefix::new(p.clone(), len);
        let part = run_online(&mut prefix, &factory, &cfg).unwrap();
        for t in 0..len {
            assert_eq!(part.frame(t), full.frame(t), "prefix {len}, frame {t}");
        }
    }
    let again = run_online(&mut p.clone(), &factory, &cfg).unwrap();
    assert_eq!(again, full);
}

#[test]
fn rejects_bad_proposals() {
    let cfg = PropagatorConfig::default();
    let mut p = Scripted::new((8, 8), vec![vec![prop(rect(4, 8, 0, 0, 1, 1), 0.9, 0.9)]]);
    assert!(matches!(
        run_online(&mut p, &carry, &cfg),
        Err(Error::DimensionMismatch { .. })
    ));
    let mut p = Scripted::new((8, 8), vec![vec![prop(rect(8, 8, 0, 0, 1, 1), 1.5, 0.9)]]);
    assert!(matches!(run_online(&mut p, &carry, &cfg), Err(Error::Proposer(_))));
    let mut p = Scripted::new((8, 8), vec![]);
    assert!(run_online(&mut p, &carry, &cfg).is_err());
}

#[test]
fn file_proposer_round_trip() {
    let s = scenario(4, STOP_THEN_MOVE);
    let (mut p, factory) = s.simulation().unwrap();
    let frames = read_proposals(&mut p).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_proposals(dir.path(), &frames).unwrap();
    let mut fp = FileProposer::open(dir.path()).unwrap();
    assert_eq!(fp.num_frames(), 4);
    assert_eq!(fp.dims(), (24, 32));
    assert_eq!(read_proposals(&mut fp).unwrap(), frames);
    let cfg = PropagatorConfig::default();
    assert_eq!(
        run_offline(&mut fp, &factory, &cfg).unwrap(),
        run_offline(&mut p, &factory, &cfg).unwrap()
    );

    std::fs::remove_dir_all(dir.path().join("00001")).unwrap();
    assert!(FileProposer::open(dir.path()).is_err());
}

#[test]
fn store_export_matches_track_flags() {
    let s = scenario(6, MOVE_THEN_STOP);
    let (mut p, factory) = s.simulation().unwrap();
    let out = run_offline(&mut p, &factory, &PropagatorConfig::default()).unwrap();
    let (store, sidecar) = out.to_store().unwrap();
    assert_eq!(sidecar[&1], vec![0, 1, 2]);
    assert_eq!(store, s.label_maps().unwrap());
}

#[test]
fn corrupted_oracle_is_seeded() {
    let gt = Arc::new(BTreeMap::from([(1u32, vec![rect(16, 16, 2, 2, 10, 10); 3])]));
    let corruption = Corruption {
        flip_prob: 0.1,
        morph_radius: -1,
        dropout_prob: 0.0,
    };
    let run = |seed| {
        let mut t = OracleTracker::new(Arc::clone(&gt), corruption.clone(), seed);
        t.init(&[Prompt {
            frame: 0,
            track: 1,
            mask: gt[&1][0].clone(),
        }])
        .unwrap();
        (0..3).map(|f| t.propagate(f).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
    assert_ne!(run(3)[0][0].1, gt[&1][0]);
}

use std::sync::Arc;
