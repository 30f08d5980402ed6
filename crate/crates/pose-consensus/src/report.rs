//! Report files written by `run`.
//!
//! * `per_pair.csv`: one row per pair and variant.
//! * `summary.json`: aggregates per variant plus the configuration echo.
//! * `curve_<variant>.csv`: accuracy at 1..=30 degrees.
//! * `yaw_sweep.csv`: aggregates per yaw bucket, when buckets are given.
//! * `results.json`: every variant's pose and the per-video scores.
//!
//! Nothing time- or machine-dependent goes into these files, so equal inputs
//! give equal bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pose_consensus_core::metrics::{
    accuracy_curve, aggregate_with, pair_errors, yaw_sweep, Aggregates, AucConvention, ErrorRow, YawBucket,
};
use pose_consensus_core::{PairConsensus, RelativePose, Variant};
use serde::{Deserialize, Serialize};

use crate::manifest::write_json;
use crate::{Error, Result};

pub const PER_PAIR_FILE: &str = "per_pair.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RESULTS_FILE: &str = "results.json";
pub const YAW_SWEEP_FILE: &str = "yaw_sweep.csv";

pub fn curve_file(v: Variant) -> String {
    format!("curve_{}.csv", v.as_str())
}

/// Everything known about one evaluated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub pair_id: String,
    pub yaw_deg: f64,
    pub ground_truth: RelativePose,
    /// Translation error is not evaluated for this pair.
    pub rotation_only_eval: bool,
    pub consensus: PairConsensus,
}

impl PairOutcome {
    pub fn errors(&self, v: Variant) -> ErrorRow {
        let pose = self.consensus.variant(v).map(|r| &r.pose);
        pair_errors(pose, &self.ground_truth, self.rotation_only_eval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPairRow {
    pub pair_id: String,
    pub variant: String,
    pub yaw_deg: f64,
    pub rot_err_deg: f64,
    pub trans_err_deg: Option<f64>,
    pub selected_video_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config: serde_json::Value,
    pub variants: BTreeMap<String, Aggregates>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub yaw_sweep: BTreeMap<String, Vec<YawBucket>>,
}

pub struct ReportOptions {
    pub variants: Vec<Variant>,
    pub bucket_edges: Option<Vec<f64>>,
    pub convention: AucConvention,
    /// Echoed verbatim into the summary.
    pub config: serde_json::Value,
}

fn csv_err(path: &Path, e: impl Into<csv::Error>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn per_pair_rows(pairs: &[PairOutcome], variants: &[Variant]) -> Vec<PerPairRow> {
    let mut rows = Vec::with_capacity(pairs.len() * variants.len());
    for p in pairs {
        for &v in variants {
            let e = p.errors(v);
            rows.push(PerPairRow {
                pair_id: p.pair_id.clone(),
                variant: v.as_str().into(),
                yaw_deg: p.yaw_deg,
                rot_err_deg: e.rot_err_deg,
                trans_err_deg: e.trans_err_deg,
                selected_video_id: p.consensus.variant(v).and_then(|r| r.selected_video_id.clone()),
            });
        }
    }
    rows
}

pub fn read_per_pair(path: &Path) -> Result<Vec<PerPairRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Serialize)]
struct CurveRow {
    threshold_deg: u32,
    rot_acc: f64,
    trans_acc: Option<f64>,
    joint_acc: f64,
}

#[derive(Serialize)]
struct SweepRow<'a> {
    variant: &'a str,
    lo_deg: f64,
    hi_deg: f64,
    count: usize,
    mre: Option<f64>,
    mte: Option<f64>,
    auc30: Option<f64>,
}

/// Computes the summary without touching the filesystem.
pub fn summarize(pairs: &[PairOutcome], opts: &ReportOptions) -> Result<Summary> {
    let mut variants = BTreeMap::new();
    let mut sweep = BTreeMap::new();
    for &v in &opts.variants {
        let rows: Vec<ErrorRow> = pairs.iter().map(|p| p.errors(v)).collect();
        variants.insert(v.as_str().to_string(), aggregate_with(&rows, opts.convention)?);
        if let Some(edges) = &opts.bucket_edges {
            let tagged: Vec<(ErrorRow, f64)> = rows.into_iter().zip(pairs.iter().map(|p| p.yaw_deg)).collect();
            sweep.insert(v.as_str().to_string(), yaw_sweep(&tagged, edges, opts.convention)?);
        }
    }
    Ok(Summary {
        schema_version: 1,
        config: opts.config.clone(),
        variants,
        yaw_sweep: sweep,
    })
}

/// Writes every report file into `out_dir` and returns their paths. With no
/// variants selected only the summary is written.
pub fn write_reports(out_dir: &Path, pairs: &[PairOutcome], opts: &ReportOptions) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let summary = summarize(pairs, opts)?;
    let mut written = Vec::new();
    if opts.variants.is_empty() {
        let path = out_dir.join(SUMMARY_FILE);
        write_json(&path, &summary)?;
        written.push(path);
        return Ok(written);
    }

    let path = out_dir.join(PER_PAIR_FILE);
    write_csv(&path, per_pair_rows(pairs, &opts.variants))?;
    written.push(path);

    for &v in &opts.variants {
        let rows: Vec<ErrorRow> = pairs.iter().map(|p| p.errors(v)).collect();
        let path = out_dir.join(curve_file(v));
        write_csv(
            &path,
            accuracy_curve(&rows)?.into_iter().map(|c| CurveRow {
                threshold_deg: c.threshold_deg,
                rot_acc: c.rot_acc,
                trans_acc: c.trans_acc,
                joint_acc: c.joint_acc,
            }),
        )?;
        written.push(path);
    }

    if !summary.yaw_sweep.is_empty() {
        let path = out_dir.join(YAW_SWEEP_FILE);
        let rows = opts.variants.iter().flat_map(|v| {
            summary.yaw_sweep[v.as_str()].iter().map(move |b| SweepRow {
                variant: v.as_str(),
                lo_deg: b.lo_deg,
                hi_deg: b.hi_deg,
                count: b.count,
                mre: b.aggregates.as_ref().map(|a| a.mre),
                mte: b.aggregates.as_ref().and_then(|a| a.mte),
                auc30: b.aggregates.as_ref().map(|a| a.auc30),
            })
        });
        write_csv(&path, rows)?;
        written.push(path);
    }

    let path = out_dir.join(SUMMARY_FILE);
    write_json(&path, &summary)?;
    written.push(path);

    let path = out_dir.join(RESULTS_FILE);
    write_json(&path, &pairs)?;
    written.push(path);
    Ok(written)
}
