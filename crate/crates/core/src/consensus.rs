//! Self-consistency scoring and the per-pair aggregation variants.
//!
//! For every generated video the estimator has been run on `m` frame subsets.
//! The video's medoid distance `D_med` is the smallest mean distance from one
//! estimate to all others; the bias term `D_bias` is the distance from that
//! medoid to the estimate on the two input images alone. The video with the
//! lowest selection key (by default `D_med + D_bias`) wins and its medoid pose
//! is the answer.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{canonical_direction, dist_pose, project_to_rotation, RelativePose};
use crate::sampling::FrameSubset;
use crate::{Error, Result};

/// Which quantity ranks videos against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum ScoreMode {
    #[default]
    Total,
    MedOnly,
    BiasOnly,
}

impl ScoreMode {
    pub fn needs_baseline(self) -> bool {
        !matches!(self, ScoreMode::MedOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Total => "total",
            ScoreMode::MedOnly => "med_only",
            ScoreMode::BiasOnly => "bias_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Variant {
    /// Estimator on the two input images only.
    PairOnly,
    /// Medoid pose of the most self-consistent video.
    Medoid,
    /// Chordal mean over every estimate of every video.
    Average,
    /// Estimate closest to ground truth; an upper bound for any selector.
    Oracle,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::PairOnly,
        Variant::Medoid,
        Variant::Average,
        Variant::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::PairOnly => "pair_only",
            Variant::Medoid => "medoid",
            Variant::Average => "average",
            Variant::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "status", content = "pose", rename_all = "snake_case")
)]
pub enum EstimateOutcome {
    Ok(RelativePose),
    EstimatorFailed,
}

impl EstimateOutcome {
    pub fn pose(&self) -> Option<&RelativePose> {
        match self {
            EstimateOutcome::Ok(p) => Some(p),
            EstimateOutcome::EstimatorFailed => None,
        }
    }
}

/// One estimate from one frame subset. `video_id` is `None` for the pair-only
/// estimate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateSample {
    pub pair_id: String,
    pub video_id: Option<String>,
    pub subset: FrameSubset,
    pub outcome: EstimateOutcome,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoScore {
    pub video_id: String,
    pub d_med: f64,
    /// Absent when no pair-only estimate was available.
    pub d_bias: Option<f64>,
    pub d_total: Option<f64>,
    pub mode: ScoreMode,
    /// Index into the video's full sample list (failed samples included).
    pub medoid_index: usize,
    pub medoid_pose: RelativePose,
    pub ok_samples: usize,
}

impl VideoScore {
    pub fn selection_key(&self) -> f64 {
        match self.mode {
            ScoreMode::Total => self.d_total.unwrap_or(f64::INFINITY),
            ScoreMode::MedOnly => self.d_med,
            ScoreMode::BiasOnly => self.d_bias.unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConsensusResult {
    pub pair_id: String,
    pub variant: Variant,
    pub selected_video_id: Option<String>,
    pub pose: RelativePose,
    pub per_video_scores: Vec<VideoScore>,
}

/// Index minimizing the mean distance to all other samples, and that mean.
/// Ties go to the lowest index.
pub fn medoid(samples: &[RelativePose], rotation_only: bool) -> Result<(usize, f64)> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InsufficientSamples { ok: m });
    }
    let mut dist = alloc::vec![0.0f64; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = dist_pose(&samples[i], &samples[j], rotation_only).total_rad;
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let denom = (m - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..m {
        let mean = dist[i * m..(i + 1) * m].iter().sum::<f64>() / denom;
        if mean < best.1 {
            best = (i, mean);
        }
    }
    Ok(best)
}

/// Scores one video's estimates against each other and against the pair-only
/// estimate. Failed estimates are skipped.
pub fn score_video(
    video_id: &str,
    samples: &[EstimateSample],
    pair_only: Option<&RelativePose>,
    mode: ScoreMode,
    rotation_only: bool,
) -> Result<VideoScore> {
    let (index, poses): (Vec<usize>, Vec<RelativePose>) = samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.outcome.pose().map(|p| (i, *p)))
        .unzip();
    if mode.needs_baseline() && pair_only.is_none() {
        return Err(Error::MissingPairBaseline);
    }
    let (local, d_med) = medoid(&poses, rotation_only)?;
    let medoid_pose = poses[local];
    let d_bias = pair_only.map(|p| dist_pose(&medoid_pose, p, rotation_only).total_rad);
    Ok(VideoScore {
        video_id: video_id.into(),
        d_med,
        d_bias,
        d_total: d_bias.map(|b| d_med + b),
        mode,
        medoid_index: index[local],
        medoid_pose,
        ok_samples: poses.len(),
    })
}

/// Picks the video with the lowest selection key; ties go to the earliest.
pub fn select_best(pair_id: &str, scores: Vec<VideoScore>) -> Result<ConsensusResult> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        let key = s.selection_key();
        if best.is_none_or(|(_, b)| key < b) {
            best = Some((i, key));
        }
    }
    let (i, _) = best.ok_or(Error::NoVideos)?;
    Ok(ConsensusResult {
        pair_id: pair_id.into(),
        variant: Variant::Medoid,
        selected_video_id: Some(scores[i].video_id.clone()),
        pose: scores[i].medoid_pose,
        per_video_scores: scores,
    })
}

/// Chordal rotation mean and sign-aligned mean translation direction.
///
/// Translations are treated as axes: each direction is flipped to agree with
/// the first usable one before averaging. If no sample has a usable
/// translation the result has zero translation.
pub fn average_pose(samples: &[RelativePose]) -> Result<RelativePose> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let sum: Matrix3<f64> = samples.iter().map(|s| *s.rotation.matrix()).sum();
    let rotation = project_to_rotation(&(sum / samples.len() as f64))?;

    let mut reference: Option<Vector3<f64>> = None;
    let mut acc = Vector3::zeros();
    for d in samples.iter().filter_map(|s| canonical_direction(&s.translation)) {
        let r = *reference.get_or_insert(d);
        acc += if d.dot(&r) < 0.0 { -d } else { d };
    }
    let n = acc.norm();
    let translation = if reference.is_some() && n > 0.0 {
        acc / n
    } else {
        Vector3::zeros()
    };
    Ok(RelativePose::new(rotation, translation))
}

/// The successful estimate closest to ground truth.
pub fn oracle_select(
    pair_id: &str,
    samples: &[EstimateSample],
    ground_truth: &RelativePose,
    rotation_only: bool,
) -> Result<ConsensusResult> {
    let mut best: Option<(&EstimateSample, &RelativePose, f64)> = None;
    for s in samples {
        if let Some(p) = s.outcome.pose() {
            let d = dist_pose(p, ground_truth, rotation_only).total_rad;
            if best.is_none_or(|(_, _, b)| d < b) {
                best = Some((s, p, d));
            }
        }
    }
    let (s, p, _) = best.ok_or(Error::NoSamples)?;
    Ok(ConsensusResult {
        pair_id: pair_id.into(),
        variant: Variant::Oracle,
        selected_video_id: s.video_id.clone(),
        pose: *p,
        per_video_scores: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoEstimates {
    pub video_id: String,
    pub samples: Vec<EstimateSample>,
}

/// Everything the estimator produced for one image pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairEstimates {
    pub pair_id: String,
    pub pair_only: EstimateOutcome,
    pub videos: Vec<VideoEstimates>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConsensusOptions {
    pub mode: ScoreMode,
    pub rotation_only: bool,
}

/// Per-pair outcome of every variant. A variant is `None` only when neither
/// it nor its fallback produced a pose.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairConsensus {
    pub pair_id: String,
    /// Score mode actually used; drops to `MedOnly` without a pair-only estimate.
    pub mode: ScoreMode,
    pub pair_only: Option<ConsensusResult>,
    pub medoid: Option<ConsensusResult>,
    pub average: Option<ConsensusResult>,
    pub oracle: Option<ConsensusResult>,
    /// Videos with fewer than two successful estimates.
    pub excluded_videos: Vec<String>,
    /// True if the medoid variant fell back to the pair-only estimate.
    pub medoid_fallback: bool,
}

impl PairConsensus {
    pub fn variant(&self, v: Variant) -> Option<&ConsensusResult> {
        match v {
            Variant::PairOnly => self.pair_only.as_ref(),
            Variant::Medoid => self.medoid.as_ref(),
            Variant::Average => self.average.as_ref(),
            Variant::Oracle => self.oracle.as_ref(),
        }
    }
}

/// Runs every variant for one pair, applying the failure policy:
/// failed estimates are dropped, videos with fewer than two successes are
/// excluded, and if nothing is left the pair-only estimate stands in.
pub fn resolve_pair(
    est: &PairEstimates,
    opts: ConsensusOptions,
    ground_truth: Option<&RelativePose>,
) -> PairConsensus {
    let pair_id = est.pair_id.as_str();
    let baseline = est.pair_only.pose();
    let mode = if baseline.is_none() && opts.mode.needs_baseline() {
        ScoreMode::MedOnly
    } else {
        opts.mode
    };
    let fallback = |variant| {
        baseline.map(|p| ConsensusResult {
            pair_id: pair_id.into(),
            variant,
            selected_video_id: None,
            pose: *p,
            per_video_scores: Vec::new(),
        })
    };

    let mut scores = Vec::new();
    let mut excluded_videos = Vec::new();
    for v in &est.videos {
        match score_video(&v.video_id, &v.samples, baseline, mode, opts.rotation_only) {
            Ok(s) => scores.push(s),
            Err(_) => excluded_videos.push(v.video_id.clone()),
        }
    }
    let (medoid, medoid_fallback) = match select_best(pair_id, scores) {
        Ok(r) => (Some(r), false),
        Err(_) => (fallback(Variant::Medoid), true),
    };

    let all: Vec<EstimateSample> = est.videos.iter().flat_map(|v| v.samples.iter().cloned()).collect();
    let ok: Vec<RelativePose> = all.iter().filter_map(|s| s.outcome.pose().copied()).collect();
    let average = match average_pose(&ok) {
        Ok(pose) => Some(ConsensusResult {
            pair_id: pair_id.into(),
            variant: Variant::Average,
            selected_video_id: None,
            pose,
            per_video_scores: Vec::new(),
        }),
        Err(_) => fallback(Variant::Average),
    };

    let oracle = ground_truth.and_then(|gt| {
        let mut candidates = all.clone();
        if medoid_fallback {
            candidates.push(EstimateSample {
                pair_id: pair_id.into(),
                video_id: None,
                subset: FrameSubset::anchors_only(),
                outcome: est.pair_only.clone(),
            });
        }
        oracle_select(pair_id, &candidates, gt, opts.rotation_only).ok()
    });

    PairConsensus {
        pair_id: pair_id.into(),
        mode,
        pair_only: fallback(Variant::PairOnly),
        medoid,
        average,
        oracle,
        excluded_videos,
        medoid_fallback,
    }
}
