//! Synthetic fixtures: a scenario file for the synthetic backend plus the
//! manifest and registry that reference its virtual frames.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use pose_consensus_core::stream::StreamKey;
use pose_consensus_core::synthetic::{NoiseLevel, SyntheticScenario, VideoQuality, VideoSpec};
use pose_consensus_core::{relative_pose, Direction, Pose, RelativePose, Rotation, VideoRecord};
use rand::{Rng, RngCore};

use crate::backend::{synth_frame_ref, synth_image_ref, ScenarioSet};
use crate::manifest::{pose_to_row_major, write_json, DatasetManifest, Facing, PairRecord, VideoRegistry, SCHEMA_VERSION};
use crate::{Error, Result};

const FIXTURE_DOMAIN: &str = "pose-consensus/fixture/v1";

pub const SCENARIO_FILE: &str = "scenario.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REGISTRY_FILE: &str = "registry.json";

/// Video counts per quality class, in generation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mixture(pub Vec<(VideoQuality, usize)>);

impl Default for Mixture {
    fn default() -> Self {
        Mixture(vec![
            (VideoQuality::Consistent, 1),
            (VideoQuality::Inconsistent, 2),
            (VideoQuality::DegenerateWrong, 1),
        ])
    }
}

impl std::str::FromStr for Mixture {
    type Err = Error;

    /// `consistent:1,inconsistent:2,degenerate_wrong:1`
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: String| Error::Config(format!("mixture {s:?}: {why}"));
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (name, count) = item.split_once(':').ok_or_else(|| bad(format!("{item} lacks a count")))?;
            let quality = match name.trim() {
                "consistent" => VideoQuality::Consistent,
                "inconsistent" => VideoQuality::Inconsistent,
                "degenerate_wrong" => VideoQuality::DegenerateWrong,
                other => return Err(bad(format!("unknown quality {other}"))),
            };
            let count = count.trim().parse().map_err(|_| bad(format!("bad count in {item}")))?;
            out.push((quality, count));
        }
        Ok(Mixture(out))
    }
}

impl Mixture {
    pub fn videos(&self) -> impl Iterator<Item = VideoQuality> + '_ {
        self.0.iter().flat_map(|&(q, n)| std::iter::repeat_n(q, n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub name: String,
    pub pairs: usize,
    pub yaw_min_deg: f64,
    pub yaw_max_deg: f64,
    pub mixture: Mixture,
    pub sigma_consistent_deg: f64,
    pub sigma_inconsistent_deg: f64,
    pub sigma_degenerate_deg: f64,
    pub sigma_pair_deg: f64,
    /// Rotation of the degenerate videos' center about the up axis.
    pub degenerate_offset_deg: f64,
    pub frames: usize,
    pub translation_scale: f64,
    pub rotation_only_eval: bool,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            name: "synthetic".into(),
            pairs: 200,
            yaw_min_deg: 50.0,
            yaw_max_deg: 65.0,
            mixture: Mixture::default(),
            sigma_consistent_deg: 2.0,
            sigma_inconsistent_deg: 25.0,
            sigma_degenerate_deg: 1.0,
            sigma_pair_deg: 8.0,
            degenerate_offset_deg: 60.0,
            frames: 25,
            translation_scale: 1.0,
            rotation_only_eval: false,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::Config(s.into()));
        if !(0.0 <= self.yaw_min_deg && self.yaw_min_deg <= self.yaw_max_deg && self.yaw_max_deg <= 180.0) {
            return bad("yaw band must satisfy 0 <= min <= max <= 180");
        }
        let sigmas = [
            self.sigma_consistent_deg,
            self.sigma_inconsistent_deg,
            self.sigma_degenerate_deg,
            self.sigma_pair_deg,
        ];
        if !sigmas.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return bad("noise levels must be finite and non-negative");
        }
        if !(self.translation_scale.is_finite() && self.translation_scale > 0.0) {
            return bad("translation scale must be positive");
        }
        if self.frames < 2 {
            return bad("videos need at least two frames");
        }
        if self.mixture.videos().any(|q| q == VideoQuality::DegenerateWrong)
            && self.degenerate_offset_deg.rem_euclid(360.0) == 0.0
        {
            return bad("degenerate videos need a nonzero offset");
        }
        Ok(())
    }
}

pub struct Fixture {
    pub scenarios: ScenarioSet,
    pub manifest: DatasetManifest,
    pub registry: VideoRegistry,
}

fn pair_id(i: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len().max(4);
    format!("pair{i:0width$}")
}

fn noise(sigma_deg: f64) -> NoiseLevel {
    let s = sigma_deg.to_radians();
    NoiseLevel::new(s, s)
}

/// Camera poses of one pair: `B` is `A` turned by `delta` about the up axis,
/// with a small tilt and a random baseline.
fn camera_pair<R: Rng>(rng: &mut R, delta: f64, scale: f64) -> (Pose, Pose) {
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt = rng.random_range(-10f64..10.0).to_radians();
    let r_a = Rotation::about_x(tilt) * Rotation::about_y(heading);
    let r_b = r_a * Rotation::about_y(-delta);
    let mut v = || rng.random_range(-1.0..1.0);
    let c_a = Vector3::new(v(), v(), v()) * scale;
    let mut baseline = Vector3::new(v(), 0.2 * v(), v());
    if baseline.norm() < 0.1 {
        baseline = Vector3::x();
    }
    let c_b = c_a + baseline.normalize() * scale;
    let t = |r: &Rotation, c: &Vector3<f64>| -(r.matrix() * c);
    (Pose::new(r_a, t(&r_a, &c_a)), Pose::new(r_b, t(&r_b, &c_b)))
}

pub fn synthesize(p: &SynthParams) -> Result<Fixture> {
    p.validate()?;
    let mut scenarios = ScenarioSet {
        schema_version: SCHEMA_VERSION,
        scenarios: Default::default(),
    };
    let mut manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        name: p.name.clone(),
        up_axis: [0.0, 1.0, 0.0],
        facing: Facing::Outward,
        pairs: Vec::with_capacity(p.pairs),
    };
    let mut registry = VideoRegistry::empty();
    let qualities: Vec<VideoQuality> = p.mixture.videos().collect();

    for i in 0..p.pairs {
        let id = pair_id(i, p.pairs);
        let mut rng = StreamKey::derive(FIXTURE_DOMAIN, p.seed, &[&(i as u64).to_le_bytes()]).rng(0);
        let mut delta = rng.random_range(p.yaw_min_deg..=p.yaw_max_deg).to_radians();
        if rng.random::<bool>() {
            delta = -delta;
        }
        let (a, b) = camera_pair(&mut rng, delta, p.translation_scale);
        let offset = RelativePose::new(Rotation::about_y(p.degenerate_offset_deg.to_radians()), Vector3::zeros());
        let videos = qualities
            .iter()
            .map(|&quality| match quality {
                VideoQuality::Consistent => VideoSpec {
                    quality,
                    center_offset: RelativePose::identity(),
                    noise: noise(p.sigma_consistent_deg),
                },
                VideoQuality::Inconsistent => VideoSpec {
                    quality,
                    center_offset: RelativePose::identity(),
                    noise: noise(p.sigma_inconsistent_deg),
                },
                VideoQuality::DegenerateWrong => VideoSpec {
                    quality,
                    center_offset: offset,
                    noise: noise(p.sigma_degenerate_deg),
                },
            })
            .collect();
        scenarios.scenarios.insert(
            id.clone(),
            SyntheticScenario {
                pair_id: id.clone(),
                ground_truth: relative_pose(&a, &b),
                pair_noise: noise(p.sigma_pair_deg),
                videos,
                seed: rng.next_u64(),
            },
        );
        manifest.pairs.push(PairRecord {
            pair_id: id.clone(),
            image_a: synth_image_ref(&id, 'a'),
            image_b: synth_image_ref(&id, 'b'),
            t_a: pose_to_row_major(&a),
            t_b: pose_to_row_major(&b),
            rotation_only_eval: p.rotation_only_eval,
        });
        let records = (0..qualities.len())
            .map(|ord| VideoRecord {
                video_id: format!("v{ord}"),
                generator: "synthetic".into(),
                prompt_id: format!("c{}", ord / 2),
                direction: if ord % 2 == 0 { Direction::Ab } else { Direction::Ba },
                frames: (1..=p.frames).map(|f| synth_frame_ref(&id, ord, f)).collect(),
            })
            .collect();
        registry.videos.insert(id, records);
    }
    Ok(Fixture {
        scenarios,
        manifest,
        registry,
    })
}

/// Writes the fixture into `dir` and returns the file paths.
pub fn write_fixture(dir: &Path, fixture: &Fixture) -> Result<[PathBuf; 3]> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = [dir.join(SCENARIO_FILE), dir.join(MANIFEST_FILE), dir.join(REGISTRY_FILE)];
    write_json(&paths[0], &fixture.scenarios)?;
    fixture.manifest.save(&paths[1])?;
    fixture.registry.save(&paths[2])?;
    Ok(paths)
}
