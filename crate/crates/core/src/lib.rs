//! Adaptive-resolution object detection over large tiled scenes.
//!
//! A scene is divided into a coarse grid of patches, each of which splits
//! further into overlapping subpatches. A patch-level policy network decides
//! which patches deserve high-resolution processing; a subpatch-level policy
//! refines that choice inside activated patches. Detections from the chosen
//! tier are merged and scored against ground truth, and a reward that trades
//! detection recall against acquisition/runtime cost drives policy training.
//!
//! Everything here is deterministic given a seed: random draws come from
//! counter-based streams derived from stable identifiers, so training runs,
//! evaluations, and simulated detector outputs reproduce bit for bit.
//!
//! IO lives in the companion CLI crate; this crate is `no_std`-compatible
//! (with `alloc`) and carries only the algorithms.

#![cfg_attr(not(feature = "std"), no_std)]
// Validation guards are written `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which `x <= 0.0` would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cascade;
pub mod detector;
pub mod error;
pub(crate) mod math;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod scene;
pub mod synth;
pub mod trainer;

pub use cascade::{CostModel, EvalReport, ObservationSpec, PolicySpec};
pub use detector::{DetectorConfig, DetectorPair, DetectionSet, Tier};
pub use error::{Error, Result};
pub use metrics::{MatchResult, MetricConfig};
pub use policy::{ActionVector, Hyperparams, PolicyModel};
pub use reward::{PatchOutcome, RewardBreakdown, RewardVariant};
pub use rng::RngStream;
pub use scene::{BBox, BoxAssignment, GridLayout, RasterObservation, Rect, Scene};
pub use synth::SynthConfig;
pub use trainer::{Stage, TrainConfig, TrainLogRecord};
