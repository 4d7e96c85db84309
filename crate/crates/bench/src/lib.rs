//! Deterministic fixtures for the kernel benchmarks.

use std::collections::BTreeMap;

use mosi_core::{BinaryMask, MotionSequence, SequencePrediction};

/// Rectangles sliding right, each moving for the first two thirds of the clip.
///
/// The prediction is the ground truth shifted by `offset` pixels, so scores
/// are high but not perfect.
pub fn sliding_boxes(
    frames: usize,
    height: usize,
    width: usize,
    objects: u32,
    offset: i64,
) -> (MotionSequence, MotionSequence) {
    let build = |shift: i64| {
        let mut masks = BTreeMap::new();
        let mut moving = BTreeMap::new();
        for id in 1..=objects {
            let row = (id as i64 - 1) * height as i64 / objects as i64;
            let h = (height as i64 / objects as i64 - 4).max(2);
            let track: Vec<BinaryMask> = (0..frames)
                .map(|t| {
                    let mut m = BinaryMask::new(height, width).expect("nonzero dims");
                    let c = (t as i64 * 3 + id as i64 * 17 + shift) % (width as i64 / 2);
                    m.fill_rect(row + 2, c, row + 2 + h, c + width as i64 / 4);
                    m
                })
                .collect();
            moving.insert(id, (0..frames).map(|t| t * 3 < frames * 2).collect());
            masks.insert(id, track);
        }
        let seq = SequencePrediction::new((0..frames).collect(), (height, width), masks).expect("consistent");
        MotionSequence::new(seq, moving).expect("consistent")
    };
    (build(offset), build(0))
}

/// A dense pseudo-random score matrix.
pub fn score_matrix(n: usize, seed: u64) -> mosi_core::ScoreMatrix {
    let mut x = seed | 1;
    mosi_core::ScoreMatrix::from_fn(n, n, |_, _| {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64
    })
    .expect("finite scores")
}
