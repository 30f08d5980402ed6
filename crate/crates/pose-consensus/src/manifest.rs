//! Dataset manifests and video registries.
//!
//! Both are JSON documents with a `schema_version` of 1. Transforms are
//! world-to-camera 4×4 matrices stored row-major as 16 numbers.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use pose_consensus_core::benchmark::PairYaw;
use pose_consensus_core::geometry::{delta_yaw_with, YawMode};
use pose_consensus_core::{relative_pose, Pose, RelativePose, VideoRecord};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Rotation blocks further than this (Frobenius) from SO(3) are rejected.
pub const TRANSFORM_RESIDUAL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    Outward,
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub image_a: String,
    pub image_b: String,
    pub t_a: [f64; 16],
    pub t_b: [f64; 16],
    #[serde(default)]
    pub rotation_only_eval: bool,
}

impl PairRecord {
    pub fn pose_a(&self) -> Result<Pose> {
        self.pose(&self.t_a, "t_a")
    }

    pub fn pose_b(&self) -> Result<Pose> {
        self.pose(&self.t_b, "t_b")
    }

    fn pose(&self, m: &[f64; 16], which: &str) -> Result<Pose> {
        Pose::from_row_major(m, TRANSFORM_RESIDUAL)
            .map_err(|e| Error::Manifest(format!("pair {}: {which}: {e}", self.pair_id)))
    }

    pub fn ground_truth(&self) -> Result<RelativePose> {
        Ok(relative_pose(&self.pose_a()?, &self.pose_b()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_up")]
    pub up_axis: [f64; 3],
    pub facing: Facing,
    pub pairs: Vec<PairRecord>,
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: DatasetManifest =
            serde_json::from_slice(&read(path)?).map_err(|e| Error::json(path, e))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let n = Vector3::from(self.up_axis).norm();
        if !((n - 1.0).abs() <= 1e-6) {
            return Err(Error::Manifest("up_axis must be unit-norm".into()));
        }
        let mut seen = HashSet::new();
        for p in &self.pairs {
            if !seen.insert(p.pair_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate pair_id {}", p.pair_id)));
            }
            p.pose_a()?;
            p.pose_b()?;
        }
        Ok(())
    }

    pub fn up_axis(&self) -> Vector3<f64> {
        Vector3::from(self.up_axis).normalize()
    }

    pub fn pair(&self, id: &str) -> Option<&PairRecord> {
        self.pairs.iter().find(|p| p.pair_id == id)
    }

    pub fn delta_yaw(&self, pair: &PairRecord, mode: YawMode) -> Result<f64> {
        Ok(delta_yaw_with(&pair.pose_a()?, &pair.pose_b()?, &self.up_axis(), mode))
    }

    pub fn yaws(&self, mode: YawMode) -> Result<Vec<PairYaw>> {
        self.pairs
            .iter()
            .map(|p| {
                Ok(PairYaw {
                    pair_id: p.pair_id.clone(),
                    yaw_deg: self.delta_yaw(p, mode)?,
                })
            })
            .collect()
    }
}

/// Generated videos per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRegistry {
    pub schema_version: u32,
    pub videos: BTreeMap<String, Vec<VideoRecord>>,
}

impl VideoRegistry {
    pub fn empty() -> Self {
        VideoRegistry {
            schema_version: SCHEMA_VERSION,
            videos: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: VideoRegistry =
            serde_json::from_slice(&read(path)?).map_err(|e| Error::json(path, e))?;
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Registry(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        for (pair, videos) in &self.videos {
            let mut seen = HashSet::new();
            for v in videos {
                if v.frames.is_empty() {
                    return Err(Error::Registry(format!(
                        "pair {pair}: video {} has no frames",
                        v.video_id
                    )));
                }
                if !seen.insert(v.video_id.as_str()) {
                    return Err(Error::Registry(format!(
                        "pair {pair}: duplicate video_id {}",
                        v.video_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn for_pair(&self, pair_id: &str) -> &[VideoRecord] {
        self.videos.get(pair_id).map_or(&[], Vec::as_slice)
    }
}

/// Flattens a pose into the row-major 4×4 layout used by manifests.
pub fn pose_to_row_major(p: &Pose) -> [f64; 16] {
    let r = p.rotation.to_row_major();
    let t = p.translation;
    [
        r[0], r[1], r[2], t.x, r[3], r[4], r[5], t.y, r[6], r[7], r[8], t.z, 0.0, 0.0, 0.0, 1.0,
    ]
}
