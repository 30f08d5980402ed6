//! End-to-end evaluation: estimates for every selected pair, consensus for
//! every variant, and the report files.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use pose_consensus_core::benchmark::select_pairs;
use pose_consensus_core::geometry::YawMode;
use pose_consensus_core::metrics::AucConvention;
use pose_consensus_core::{
    build_plan, resolve_pair, ConsensusOptions, EstimateOutcome, EstimateSample, PairEstimates,
    RelativePose, SamplingPlan, ScoreMode, Variant, VideoEstimates, VideoRecord,
};
use serde_json::json;

use crate::backend::{BackendSpec, EstimatorBackend, DEFAULT_TIMEOUT};
use crate::cache::{cached_estimate, CallStats, ResultCache};
use crate::manifest::{DatasetManifest, PairRecord, VideoRegistry};
use crate::protocol::EstimatorRequest;
use crate::report::{write_reports, PairOutcome, ReportOptions};
use crate::{Error, Result};

/// Which pairs of the manifest to evaluate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairFilter {
    /// File of pair ids, as written by `select-pairs`.
    pub pairs_file: Option<PathBuf>,
    pub yaw_min: Option<f64>,
    pub yaw_max: Option<f64>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub registry: PathBuf,
    pub backend: BackendSpec,
    pub cache_dir: Option<PathBuf>,
    pub plan: SamplingPlan,
    pub score_mode: ScoreMode,
    pub variants: Vec<Variant>,
    /// Score videos on rotation only. Evaluation drops translation for these
    /// runs and for pairs flagged in the manifest.
    pub rotation_only: bool,
    pub filter: PairFilter,
    pub bucket_edges: Option<Vec<f64>>,
    pub yaw_mode: YawMode,
    pub auc_convention: AucConvention,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub timeout: Duration,
}

impl RunConfig {
    pub fn new(manifest: PathBuf, registry: PathBuf, backend: BackendSpec, out_dir: PathBuf) -> Self {
        RunConfig {
            manifest,
            registry,
            backend,
            cache_dir: None,
            plan: SamplingPlan::default(),
            score_mode: ScoreMode::Total,
            variants: Variant::ALL.to_vec(),
            rotation_only: false,
            filter: PairFilter::default(),
            bucket_edges: None,
            yaw_mode: YawMode::Twist,
            auc_convention: AucConvention::JointMax,
            out_dir,
            jobs: 1,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reads a pair-list file: one id per line, `#` starts a comment.
pub fn read_pair_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn write_pair_list(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = String::new();
    for id in ids {
        text.push_str(id);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pair ids to evaluate, sorted.
pub fn selected_pairs(manifest: &DatasetManifest, filter: &PairFilter, seed: u64, yaw_mode: YawMode) -> Result<Vec<String>> {
    let mut ids = if let Some(path) = &filter.pairs_file {
        let ids = read_pair_list(path)?;
        if let Some(missing) = ids.iter().find(|id| manifest.pair(id).is_none()) {
            return Err(Error::Config(format!("pair {missing} is not in the manifest")));
        }
        ids
    } else if filter.yaw_min.is_some() || filter.yaw_max.is_some() || filter.count.is_some() {
        select_pairs(
            &manifest.yaws(yaw_mode)?,
            filter.yaw_min.unwrap_or(0.0),
            filter.yaw_max.unwrap_or(180.0),
            filter.count.unwrap_or(usize::MAX),
            seed,
        )?
    } else {
        manifest.pairs.iter().map(|p| p.pair_id.clone()).collect()
    };
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

/// Relative references are taken relative to the file that lists them.
fn resolve_ref(base: &Path, r: &str) -> String {
    if r.contains("://") || Path::new(r).is_absolute() {
        r.to_string()
    } else {
        base.join(r).to_string_lossy().into_owned()
    }
}

/// One pair's estimator inputs with every reference resolved.
#[derive(Debug, Clone)]
pub struct PairJob {
    pub pair_id: String,
    pub image_a: String,
    pub image_b: String,
    pub videos: Vec<VideoRecord>,
}

impl PairJob {
    pub fn new(pair: &PairRecord, videos: &[VideoRecord], manifest_dir: &Path, registry_dir: &Path) -> Self {
        PairJob {
            pair_id: pair.pair_id.clone(),
            image_a: resolve_ref(manifest_dir, &pair.image_a),
            image_b: resolve_ref(manifest_dir, &pair.image_b),
            videos: videos
                .iter()
                .map(|v| VideoRecord {
                    frames: v.frames.iter().map(|f| resolve_ref(registry_dir, f)).collect(),
                    ..v.clone()
                })
                .collect(),
        }
    }
}

/// Runs one request; a malformed answer counts as a failed estimate.
fn request(
    backend: &mut dyn EstimatorBackend,
    cache: Option<&ResultCache>,
    req: EstimatorRequest,
    stats: &mut CallStats,
) -> Result<EstimateOutcome> {
    match cached_estimate(cache, backend, &req, stats) {
        Ok(r) => {
            if r.outcome == EstimateOutcome::EstimatorFailed {
                log::info!("estimator failed on {}", req.request_id);
            }
            Ok(r.outcome)
        }
        Err(Error::MalformedResponse(why)) => {
            log::warn!("{}: {why}", req.request_id);
            Ok(EstimateOutcome::EstimatorFailed)
        }
        Err(e) => Err(e),
    }
}

/// The pair-only request plus every planned subset of every video.
pub fn estimate_pair(
    backend: &mut dyn EstimatorBackend,
    cache: Option<&ResultCache>,
    job: &PairJob,
    plan: &SamplingPlan,
    stats: &mut CallStats,
) -> Result<PairEstimates> {
    let anchors = vec![job.image_a.clone(), job.image_b.clone()];
    let pair_only = request(
        backend,
        cache,
        EstimatorRequest::new(format!("{}/pair", job.pair_id), anchors),
        stats,
    )?;
    let mut videos = Vec::with_capacity(job.videos.len());
    for video in &job.videos {
        let subsets = match build_plan(&job.pair_id, video, plan) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("pair {} video {}: {e}; video excluded", job.pair_id, video.video_id);
                Vec::new()
            }
        };
        let mut samples = Vec::with_capacity(subsets.len());
        for (ordinal, subset) in subsets.into_iter().enumerate() {
            let refs = subset
                .frame_refs(&job.image_a, &job.image_b, &video.frames)
                .into_iter()
                .map(str::to_string)
                .collect();
            let id = format!("{}/{}/{ordinal}", job.pair_id, video.video_id);
            let outcome = request(backend, cache, EstimatorRequest::new(id, refs), stats)?;
            samples.push(EstimateSample {
                pair_id: job.pair_id.clone(),
                video_id: Some(video.video_id.clone()),
                subset,
                outcome,
            });
        }
        videos.push(VideoEstimates {
            video_id: video.video_id.clone(),
            samples,
        });
    }
    Ok(PairEstimates {
        pair_id: job.pair_id.clone(),
        pair_only,
        videos,
    })
}

/// Estimates for `jobs` on `width` workers, each with its own backend.
/// Results come back in job order whatever the width.
pub fn estimate_all(
    spec: &BackendSpec,
    timeout: Duration,
    cache: Option<&ResultCache>,
    jobs: &[PairJob],
    plan: &SamplingPlan,
    width: usize,
) -> Result<(Vec<PairEstimates>, CallStats)> {
    let width = width.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<PairEstimates>>> = Mutex::new(vec![None; jobs.len()]);
    let totals = Mutex::new(CallStats::default());
    let first_error: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|s| {
        for _ in 0..width {
            s.spawn(|| {
                let mut stats = CallStats::default();
                let outcome = (|| -> Result<()> {
                    let mut backend = spec.open(timeout)?;
                    while !abort.load(Ordering::Relaxed) {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(job) = jobs.get(i) else { break };
                        let est = estimate_pair(backend.as_mut(), cache, job, plan, &mut stats)?;
                        slots.lock().unwrap()[i] = Some(est);
                    }
                    Ok(())
                })();
                *totals.lock().unwrap() += stats;
                if let Err(e) = outcome {
                    abort.store(true, Ordering::Relaxed);
                    first_error.lock().unwrap().get_or_insert(e);
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let estimates = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|e| e.expect("every job ran"))
        .collect();
    Ok((estimates, totals.into_inner().unwrap()))
}

/// Ground truth and yaw of one pair, needed to evaluate its estimates.
#[derive(Debug, Clone)]
pub struct PairTruth {
    pub ground_truth: RelativePose,
    pub yaw_deg: f64,
    pub rotation_only_eval: bool,
}

/// Consensus and errors for already-gathered estimates.
pub fn evaluate(estimates: &[PairEstimates], truths: &[PairTruth], opts: ConsensusOptions) -> Vec<PairOutcome> {
    estimates
        .iter()
        .zip(truths)
        .map(|(est, t)| PairOutcome {
            pair_id: est.pair_id.clone(),
            yaw_deg: t.yaw_deg,
            ground_truth: t.ground_truth,
            rotation_only_eval: t.rotation_only_eval || opts.rotation_only,
            consensus: resolve_pair(est, opts, Some(&t.ground_truth)),
        })
        .collect()
}

/// Requests and ground truth for the pairs `ids`, in that order.
pub fn prepare(
    manifest: &DatasetManifest,
    registry: &VideoRegistry,
    ids: &[String],
    manifest_dir: &Path,
    registry_dir: &Path,
    yaw_mode: YawMode,
) -> Result<(Vec<PairJob>, Vec<PairTruth>)> {
    let mut jobs = Vec::with_capacity(ids.len());
    let mut truths = Vec::with_capacity(ids.len());
    for id in ids {
        let pair = manifest
            .pair(id)
            .ok_or_else(|| Error::Config(format!("pair {id} is not in the manifest")))?;
        jobs.push(PairJob::new(pair, registry.for_pair(id), manifest_dir, registry_dir));
        truths.push(PairTruth {
            ground_truth: pair.ground_truth()?,
            yaw_deg: manifest.delta_yaw(pair, yaw_mode)?,
            rotation_only_eval: pair.rotation_only_eval,
        });
    }
    Ok((jobs, truths))
}

pub struct RunOutput {
    pub pairs: Vec<PairOutcome>,
    pub stats: CallStats,
    pub files: Vec<PathBuf>,
}

fn parent_dir(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// The `run` command.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let registry = VideoRegistry::load(&cfg.registry)?;
    let ids = selected_pairs(&manifest, &cfg.filter, cfg.plan.seed, cfg.yaw_mode)?;
    if ids.is_empty() {
        return Err(pose_consensus_core::Error::EmptySelection.into());
    }

    let (jobs, truths) = prepare(
        &manifest,
        &registry,
        &ids,
        &parent_dir(&cfg.manifest),
        &parent_dir(&cfg.registry),
        cfg.yaw_mode,
    )?;

    let cache = cfg.cache_dir.as_deref().map(ResultCache::open).transpose()?;
    // Identity of the backend goes into the summary, so it is opened once up
    // front; this also surfaces handshake failures before any work is done.
    let (backend_id, backend_version) = {
        let b = cfg.backend.open(cfg.timeout)?;
        (b.id().to_string(), b.version().to_string())
    };
    let (estimates, stats) = estimate_all(&cfg.backend, cfg.timeout, cache.as_ref(), &jobs, &cfg.plan, cfg.jobs)?;
    log::info!(
        "{} pairs, {} requests, {} backend calls, {} cache hits",
        ids.len(),
        stats.requests,
        stats.backend_calls,
        stats.cache_hits
    );

    let opts = ConsensusOptions {
        mode: cfg.score_mode,
        rotation_only: cfg.rotation_only,
    };
    let pairs = evaluate(&estimates, &truths, opts);
    for p in &pairs {
        if p.consensus.medoid_fallback {
            log::warn!("pair {}: no usable video, medoid falls back to pair-only", p.pair_id);
        }
    }

    let report = ReportOptions {
        variants: cfg.variants.clone(),
        bucket_edges: cfg.bucket_edges.clone(),
        convention: cfg.auc_convention,
        config: json!({
            "dataset": manifest.name,
            "pairs": ids.len(),
            "backend": { "id": backend_id, "version": backend_version },
            "k": cfg.plan.k,
            "m_random": cfg.plan.m_random,
            "include_uniform": cfg.plan.include_uniform,
            "seed": cfg.plan.seed,
            "score_mode": cfg.score_mode.as_str(),
            "variants": cfg.variants.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
            "rotation_only": cfg.rotation_only,
            "yaw_mode": match cfg.yaw_mode { YawMode::Twist => "twist", YawMode::Geodesic => "geodesic" },
            "auc_convention": match cfg.auc_convention {
                AucConvention::JointMax => "joint_max",
                AucConvention::MeanOfBoth => "mean_of_both",
            },
            "buckets": cfg.bucket_edges,
        }),
    };
    let files = write_reports(&cfg.out_dir, &pairs, &report)?;
    Ok(RunOutput { pairs, stats, files })
}
