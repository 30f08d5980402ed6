//! Self-consistency pose selection.
//!
//! Given a pair of images `A`, `B` and a handful of interpolating videos
//! generated between them, a black-box multi-view pose estimator is run on
//! many small frame subsets of every video. A video whose subsets all agree on
//! the `A -> B` relative pose is probably geometrically consistent; this crate
//! scores that agreement with a medoid distance, picks the most consistent
//! video and returns its medoid pose.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function of
//! its inputs, including the random streams, which are counter-based and keyed
//! so that results do not depend on processing order or thread count. File
//! formats, the estimator process protocol, caching and the command line live
//! in the `pose-consensus` crate.

#![no_std]

extern crate alloc;

pub mod benchmark;
pub mod consensus;
mod error;
pub mod geometry;
pub mod metrics;
pub mod sampling;
pub mod stream;
pub mod synthetic;

pub use consensus::{
    average_pose, medoid, oracle_select, resolve_pair, score_video, select_best, ConsensusResult,
    ConsensusOptions, EstimateOutcome, EstimateSample, PairConsensus, PairEstimates, ScoreMode, Variant,
    VideoEstimates, VideoScore,
};
pub use error::{Error, Result};
pub use geometry::{
    delta_yaw, dist_pose, dist_rot, dist_trans, project_to_rotation, relative_pose, Pose,
    PoseDistance, RelativePose, Rotation, YawMode,
};
pub use sampling::{build_plan, random_subsets, uniform_subset, Direction, FrameSubset, SamplingPlan, VideoRecord};
