//! Desk-scale stand-in for "generate a video, then run a pose estimator on a
//! frame subset".
//!
//! Each video of a pair has a quality class that decides how its estimates
//! scatter around the true relative pose:
//!
//! * `Consistent`: every subset lands near `ground_truth ∘ center_offset`.
//! * `Inconsistent`: every subset first draws its own random center, then
//!   lands near that center, so estimates disagree with each other.
//! * `DegenerateWrong`: tight cluster around a wrong pose (`center_offset`
//!   must not be the identity), e.g. the classic half-turn flip.
//!
//! Rotation noise is a left perturbation by a uniformly random axis and a
//! half-normal angle; translation direction noise tilts the direction by a
//! half-normal angle towards a uniformly random perpendicular. All draws are
//! keyed by `(seed, pair_id, source, draw)`.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{RelativePose, Rotation, DEGENERATE_NORM};
use crate::sampling::FrameSubset;
use crate::stream::{index_digest, StreamKey};
use crate::{Error, Result};

const SYNTH_DOMAIN: &str = "pose-consensus/synthetic/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum VideoQuality {
    Consistent,
    Inconsistent,
    DegenerateWrong,
}

/// Standard deviations (radians) of the half-normal noise angles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseLevel {
    pub sigma_rot: f64,
    pub sigma_dir: f64,
}

impl NoiseLevel {
    pub fn new(sigma_rot: f64, sigma_dir: f64) -> Self {
        NoiseLevel {
            sigma_rot,
            sigma_dir,
        }
    }

    fn is_valid(&self) -> bool {
        self.sigma_rot >= 0.0
            && self.sigma_dir >= 0.0
            && self.sigma_rot.is_finite()
            && self.sigma_dir.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoSpec {
    pub quality: VideoQuality,
    pub center_offset: RelativePose,
    pub noise: NoiseLevel,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticScenario {
    pub pair_id: String,
    pub ground_truth: RelativePose,
    pub pair_noise: NoiseLevel,
    pub videos: Vec<VideoSpec>,
    pub seed: u64,
}

/// Which estimator input a draw simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    PairOnly,
    Video(usize),
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<()> {
        if !self.pair_noise.is_valid() {
            return Err(Error::InvalidScenario("noise levels must be finite and non-negative"));
        }
        for v in &self.videos {
            if !v.noise.is_valid() {
                return Err(Error::InvalidScenario(
                    "noise levels must be finite and non-negative",
                ));
            }
            if v.quality == VideoQuality::DegenerateWrong
                && v.center_offset.rotation.angle() == 0.0
                && v.center_offset.translation.norm() == 0.0
            {
                return Err(Error::InvalidScenario("degenerate_wrong needs a nonzero offset"));
            }
        }
        Ok(())
    }
}

/// Estimate for draw number `draw` from `source`.
pub fn synthetic_draw(scenario: &SyntheticScenario, source: Source, draw: u64) -> Result<RelativePose> {
    scenario.validate()?;
    let tag: [u8; 9] = match source {
        Source::PairOnly => [0; 9],
        Source::Video(i) => {
            let mut t = [1u8; 9];
            t[1..].copy_from_slice(&(i as u64).to_le_bytes());
            t
        }
    };
    let key = StreamKey::derive(SYNTH_DOMAIN, scenario.seed, &[scenario.pair_id.as_bytes(), &tag]);
    let mut rng = key.rng(draw);
    let gt = &scenario.ground_truth;
    Ok(match source {
        Source::PairOnly => perturb(&mut rng, gt, &scenario.pair_noise),
        Source::Video(i) => {
            let spec = scenario
                .videos
                .get(i)
                .ok_or(Error::InvalidScenario("video ordinal out of range"))?;
            let base = gt.compose(&spec.center_offset);
            match spec.quality {
                VideoQuality::Consistent | VideoQuality::DegenerateWrong => {
                    perturb(&mut rng, &base, &spec.noise)
                }
                VideoQuality::Inconsistent => {
                    let center = perturb(&mut rng, &base, &spec.noise);
                    perturb(&mut rng, &center, &spec.noise)
                }
            }
        }
    })
}

/// Estimate for a frame subset. The draw is addressed by the subset's content,
/// so the same frames always give the same answer, as a real estimator would.
/// `video` is `None` for the pair-only input.
pub fn synthetic_sample(
    scenario: &SyntheticScenario,
    video: Option<usize>,
    subset: &FrameSubset,
) -> Result<RelativePose> {
    let source = video.map_or(Source::PairOnly, Source::Video);
    synthetic_draw(scenario, source, index_digest(&subset.interior))
}

fn half_normal<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z.abs() * sigma
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::<f64>::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn perturb<R: Rng>(rng: &mut R, pose: &RelativePose, noise: &NoiseLevel) -> RelativePose {
    let angle = half_normal(rng, noise.sigma_rot);
    let axis = random_unit(rng);
    let rotation = if angle == 0.0 {
        pose.rotation
    } else {
        Rotation::from_axis_angle(&axis, angle) * pose.rotation
    };

    let tilt = half_normal(rng, noise.sigma_dir);
    let towards = random_unit(rng);
    let t = pose.translation;
    let norm = t.norm();
    let translation = if tilt == 0.0 || !(norm >= DEGENERATE_NORM) {
        t
    } else {
        let d = t / norm;
        let mut p = towards - d * towards.dot(&d);
        if p.norm() < 1e-9 {
            p = d.cross(&Vector3::x());
            if p.norm() < 1e-9 {
                p = d.cross(&Vector3::y());
            }
        }
        let p = p.normalize();
        (d * libm::cos(tilt) + p * libm::sin(tilt)) * norm
    };
    RelativePose::new(rotation, translation)
}
