//! Frame-subset plans for a generated video.
//!
//! Frames are numbered `1..=N`. Frames `1` and `N` reproduce the two input
//! images, so only the interior `2..=N-1` is ever sampled; the original input
//! images are always prepended when a subset is turned into an estimator
//! request.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::stream::StreamKey;
use crate::{Error, Result};

const SUBSET_DOMAIN: &str = "pose-consensus/frame-subsets/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum Direction {
    /// Generated from `A` towards `B`.
    Ab,
    /// Generated from `B` towards `A` (input order flipped).
    Ba,
}

/// One generated video between the two images of a pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoRecord {
    pub video_id: String,
    pub generator: String,
    pub prompt_id: String,
    pub direction: Direction,
    pub frames: Vec<String>,
}

/// How many subsets to draw per video and how large they are.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplingPlan {
    /// Images per subset, including the two input images.
    pub k: usize,
    pub m_random: usize,
    pub include_uniform: bool,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            k: 5,
            m_random: 10,
            include_uniform: true,
            seed: 0,
        }
    }
}

impl SamplingPlan {
    pub fn interior_count(&self) -> usize {
        self.k.saturating_sub(2)
    }

    pub fn subsets_per_video(&self) -> usize {
        self.m_random + usize::from(self.include_uniform)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidPlan("k must be at least 2"));
        }
        if self.subsets_per_video() == 0 {
            return Err(Error::InvalidPlan("plan produces no subsets"));
        }
        Ok(())
    }
}

/// Sorted, distinct 1-based interior frame indices of one subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameSubset {
    pub interior: Vec<u32>,
}

impl FrameSubset {
    pub fn anchors_only() -> Self {
        FrameSubset::default()
    }

    /// Estimator input: the two original images, then the selected video
    /// frames in index order.
    pub fn frame_refs<'a>(
        &self,
        image_a: &'a str,
        image_b: &'a str,
        frames: &'a [String],
    ) -> Vec<&'a str> {
        let mut refs = Vec::with_capacity(2 + self.interior.len());
        refs.push(image_a);
        refs.push(image_b);
        refs.extend(self.interior.iter().map(|&i| frames[i as usize - 1].as_str()));
        refs
    }
}

fn check_length(n_frames: usize, g: usize) -> Result<()> {
    if n_frames < g + 2 {
        return Err(Error::VideoTooShort {
            n_frames,
            required: g + 2,
        });
    }
    Ok(())
}

/// `g` evenly spaced interior frames: `round(1 + j (N-1)/(g+1))` for
/// `j = 1..=g`, rounding halves up.
pub fn uniform_subset(n_frames: usize, g: usize) -> Result<FrameSubset> {
    check_length(n_frames, g)?;
    let mut interior: Vec<u32> = Vec::with_capacity(g);
    let d = (g + 1) as u64;
    let span = (n_frames - 1) as u64;
    let hi = (n_frames - 1) as u64;
    for j in 1..=g as u64 {
        // round((d + j*span) / d), all terms positive
        let num = d + j * span;
        let mut idx = (2 * num + d) / (2 * d);
        idx = idx.clamp(2, hi);
        if let Some(&prev) = interior.last() {
            if idx <= prev as u64 {
                idx = prev as u64 + 1;
            }
        }
        interior.push(idx as u32);
    }
    // Shifting right can only overflow the top if rounding collided; pull the
    // tail back so the last index stays inside the interior.
    let mut cap = hi as u32;
    for slot in interior.iter_mut().rev() {
        if *slot > cap {
            *slot = cap;
        }
        cap = slot.saturating_sub(1);
    }
    Ok(FrameSubset { interior })
}

/// `count` subsets of `g` distinct interior frames, each drawn uniformly
/// without replacement. Draw `i` depends only on `(seed, pair_id, video_id, i)`.
pub fn random_subsets(
    n_frames: usize,
    g: usize,
    count: usize,
    seed: u64,
    pair_id: &str,
    video_id: &str,
) -> Result<Vec<FrameSubset>> {
    check_length(n_frames, g)?;
    let key = StreamKey::derive(SUBSET_DOMAIN, seed, &[pair_id.as_bytes(), video_id.as_bytes()]);
    let pool: Vec<u32> = (2..n_frames as u32).collect();
    Ok((0..count as u64)
        .map(|ordinal| {
            let mut rng = key.rng(ordinal);
            let mut pool = pool.clone();
            let len = pool.len() as u32;
            for i in 0..g as u32 {
                let j = rng.random_range(i..len);
                pool.swap(i as usize, j as usize);
            }
            let mut interior = pool[..g].to_vec();
            interior.sort_unstable();
            FrameSubset { interior }
        })
        .collect())
}

/// Full plan for one video: the uniform subset first (if enabled), then the
/// random subsets by ordinal.
pub fn build_plan(pair_id: &str, video: &VideoRecord, plan: &SamplingPlan) -> Result<Vec<FrameSubset>> {
    plan.validate()?;
    let n = video.frames.len();
    let g = plan.interior_count();
    check_length(n, g)?;
    let mut out = Vec::with_capacity(plan.subsets_per_video());
    if plan.include_uniform {
        out.push(uniform_subset(n, g)?);
    }
    out.extend(random_subsets(n, g, plan.m_random, plan.seed, pair_id, &video.video_id)?);
    Ok(out)
}
