//! Evaluation and track-linking for moving object segmentation.
//!
//! Masks are bit-packed ([`BinaryMask`]). Sequence metrics live in
//! [`metrics`], the proposer/tracker linking loop in [`propagator`], motion
//! interval annotations in [`annotations`] and reference loss functions in
//! [`objectives`]. [`selfcheck`] holds brute-force versions of the optimized
//! code paths.

pub mod annotations;
pub mod assignment;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod objectives;
pub mod propagator;
pub mod selfcheck;

pub use annotations::{MotionInterval, SequenceAnnotation};
pub use assignment::{max_assignment, Assignment, ScoreMatrix};
pub use error::{Error, ErrorKind, Result};
pub use mask::{BinaryMask, LabelMap, MaskStore, Rle};
pub use metrics::{MotionSequence, SequencePrediction};
pub use propagator::{PropagatorConfig, TrackOutput};
