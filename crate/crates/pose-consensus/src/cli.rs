//! Command-line surface.
//!
//! Exit codes: 0 success, 1 internal error, 2 empty selection, 3 backend
//! failure.

use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pose_consensus_core::benchmark::select_pairs;
use pose_consensus_core::geometry::YawMode;
use pose_consensus_core::metrics::AucConvention;
use pose_consensus_core::{SamplingPlan, ScoreMode, Variant};

use crate::backend::BackendSpec;
use crate::manifest::DatasetManifest;
use crate::pipeline::{run, write_pair_list, PairFilter, RunConfig};
use crate::synth::{synthesize, write_fixture, Mixture, SynthParams};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_EMPTY_SELECTION: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pose-consensus", version, about = "Relative pose selection by self-consistency of generated videos")]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample pairs within a yaw band and write their ids, one per line.
    SelectPairs(SelectArgs),
    /// Estimate, score and evaluate every selected pair.
    Run(Box<RunArgs>),
    /// Generate a synthetic scenario, manifest and registry.
    Synth(SynthArgs),
    /// Answer estimator requests on stdin/stdout with an in-process backend.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScoreModeArg {
    Total,
    MedOnly,
    BiasOnly,
}

impl From<ScoreModeArg> for ScoreMode {
    fn from(m: ScoreModeArg) -> Self {
        match m {
            ScoreModeArg::Total => ScoreMode::Total,
            ScoreModeArg::MedOnly => ScoreMode::MedOnly,
            ScoreModeArg::BiasOnly => ScoreMode::BiasOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum YawModeArg {
    Twist,
    Geodesic,
}

impl From<YawModeArg> for YawMode {
    fn from(m: YawModeArg) -> Self {
        match m {
            YawModeArg::Twist => YawMode::Twist,
            YawModeArg::Geodesic => YawMode::Geodesic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AucArg {
    JointMax,
    MeanOfBoth,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant {s:?} (pair_only, medoid, average, oracle)"))
}

fn parse_backend(s: &str) -> Result<BackendSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    yaw_min: f64,
    #[arg(long)]
    yaw_max: f64,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "twist")]
    yaw_mode: YawModeArg,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// `synthetic:<scenario file>`, `process:<command line>` or `echo`.
    #[arg(long, value_parser = parse_backend)]
    backend: BackendSpec,
    #[arg(long, env = "POSE_CONSENSUS_CACHE")]
    cache_dir: Option<PathBuf>,
    /// Frames per estimator call, including the two input images.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    m_random: usize,
    #[arg(long)]
    no_uniform: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "total")]
    score_mode: ScoreModeArg,
    #[arg(long, value_delimiter = ',', value_parser = parse_variant,
          default_value = "pair_only,medoid,average,oracle")]
    variants: Vec<Variant>,
    #[arg(long)]
    rotation_only: bool,
    /// Pair-list file; overrides the yaw filter.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    yaw_min: Option<f64>,
    #[arg(long)]
    yaw_max: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_enum, default_value = "twist")]
    yaw_mode: YawModeArg,
    /// Yaw bucket edges in degrees, e.g. `0,30,60,90`.
    #[arg(long, value_delimiter = ',')]
    buckets: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "joint-max")]
    auc: AucArg,
    /// Worker threads, each with its own backend instance.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Per-request timeout for process backends.
    #[arg(long, default_value_t = 300)]
    timeout_secs: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long = "pairs", default_value_t = 200)]
    pairs: usize,
    #[arg(long, default_value_t = 50.0)]
    yaw_min: f64,
    #[arg(long, default_value_t = 65.0)]
    yaw_max: f64,
    #[arg(long, default_value = "consistent:1,inconsistent:2,degenerate_wrong:1")]
    mixture: Mixture,
    /// Noise levels in degrees.
    #[arg(long, default_value_t = 2.0)]
    sigma_consistent: f64,
    #[arg(long, default_value_t = 25.0)]
    sigma_inconsistent: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_degenerate: f64,
    #[arg(long, default_value_t = 8.0)]
    sigma_pair: f64,
    #[arg(long, default_value_t = 60.0)]
    degenerate_offset: f64,
    #[arg(long, default_value_t = 25)]
    frames: usize,
    #[arg(long, default_value_t = 1.0)]
    translation_scale: f64,
    #[arg(long)]
    rotation_only_eval: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// `echo` or `synthetic:<scenario file>`.
    #[arg(long, value_parser = parse_backend)]
    backend: BackendSpec,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Core(pose_consensus_core::Error::EmptySelection) => EXIT_EMPTY_SELECTION,
        e if e.is_backend_failure() => EXIT_BACKEND,
        _ => EXIT_INTERNAL,
    }
}

fn select(a: SelectArgs) -> crate::Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let ids = select_pairs(&manifest.yaws(a.yaw_mode.into())?, a.yaw_min, a.yaw_max, a.count, a.seed)?;
    match &a.out {
        Some(path) => write_pair_list(path, &ids)?,
        None => {
            let mut out = io::stdout().lock();
            for id in &ids {
                writeln!(out, "{id}").map_err(|e| Error::io("<stdout>", e))?;
            }
        }
    }
    eprintln!("selected {} pairs", ids.len());
    Ok(())
}

fn run_cmd(a: RunArgs) -> crate::Result<()> {
    let mut cfg = RunConfig::new(a.manifest, a.registry, a.backend, a.out);
    cfg.cache_dir = a.cache_dir;
    cfg.plan = SamplingPlan {
        k: a.k,
        m_random: a.m_random,
        include_uniform: !a.no_uniform,
        seed: a.seed,
    };
    cfg.score_mode = a.score_mode.into();
    cfg.variants = a.variants;
    cfg.rotation_only = a.rotation_only;
    cfg.filter = PairFilter {
        pairs_file: a.pairs,
        yaw_min: a.yaw_min,
        yaw_max: a.yaw_max,
        count: a.count,
    };
    cfg.bucket_edges = a.buckets;
    cfg.yaw_mode = a.yaw_mode.into();
    cfg.auc_convention = match a.auc {
        AucArg::JointMax => AucConvention::JointMax,
        AucArg::MeanOfBoth => AucConvention::MeanOfBoth,
    };
    cfg.jobs = a.jobs;
    cfg.timeout = Duration::from_secs(a.timeout_secs);
    let out = run(&cfg)?;
    eprintln!(
        "{} pairs: {} requests, {} backend calls, {} cache hits; reports in {}",
        out.pairs.len(),
        out.stats.requests,
        out.stats.backend_calls,
        out.stats.cache_hits,
        cfg.out_dir.display()
    );
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> crate::Result<()> {
    let params = SynthParams {
        name: a.name,
        pairs: a.pairs,
        yaw_min_deg: a.yaw_min,
        yaw_max_deg: a.yaw_max,
        mixture: a.mixture,
        sigma_consistent_deg: a.sigma_consistent,
        sigma_inconsistent_deg: a.sigma_inconsistent,
        sigma_degenerate_deg: a.sigma_degenerate,
        sigma_pair_deg: a.sigma_pair,
        degenerate_offset_deg: a.degenerate_offset,
        frames: a.frames,
        translation_scale: a.translation_scale,
        rotation_only_eval: a.rotation_only_eval,
        seed: a.seed,
    };
    for p in write_fixture(&a.out, &synthesize(&params)?)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> crate::Result<()> {
    if let BackendSpec::Process(_) = a.backend {
        return Err(Error::Config("serve only hosts in-process backends".into()));
    }
    let mut backend = a.backend.open(Duration::MAX)?;
    crate::serve::serve(backend.as_mut(), io::stdin().lock(), io::stdout().lock())?;
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INTERNAL } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let result = match cli.command {
        Command::SelectPairs(a) => select(a),
        Command::Run(a) => run_cmd(*a),
        Command::Synth(a) => synth_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
