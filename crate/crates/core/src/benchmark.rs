//! Benchmark pair selection by yaw range.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::stream::StreamKey;
use crate::{Error, Result};

const SELECT_DOMAIN: &str = "pose-consensus/select-pairs/v1";

/// A candidate image pair and its yaw change in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct PairYaw {
    pub pair_id: String,
    pub yaw_deg: f64,
}

/// Uniformly samples up to `count` pairs whose yaw lies in
/// `[yaw_min, yaw_max]`, without replacement.
///
/// Candidates are sorted by id before sampling, so the result only depends on
/// the candidate set and the seed. The returned ids are sorted.
pub fn select_pairs(
    candidates: &[PairYaw],
    yaw_min: f64,
    yaw_max: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if !(yaw_min <= yaw_max) {
        return Err(Error::InvalidRange {
            min: yaw_min,
            max: yaw_max,
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut eligible: Vec<&str> = candidates
        .iter()
        .filter(|c| c.yaw_deg >= yaw_min && c.yaw_deg <= yaw_max)
        .map(|c| c.pair_id.as_str())
        .collect();
    if eligible.is_empty() {
        return Err(Error::EmptySelection);
    }
    eligible.sort_unstable();
    eligible.dedup();

    let take = count.min(eligible.len());
    let mut rng = StreamKey::derive(SELECT_DOMAIN, seed, &[]).rng(0);
    let len = eligible.len() as u64;
    for i in 0..take as u64 {
        let j = rng.random_range(i..len);
        eligible.swap(i as usize, j as usize);
    }
    let mut chosen: Vec<String> = eligible[..take].iter().map(|s| s.to_string()).collect();
    chosen.sort_unstable();
    Ok(chosen)
}
