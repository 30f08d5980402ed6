//! Evaluation against ground truth: per-pair errors in degrees and the
//! aggregate metrics (MRE, MTE, accuracy at 5/15/30 degrees, AUC up to 30).
//!
//! Accuracy thresholds are strict: an error of exactly 5° does not count as
//! "within 5°". Pairs evaluated on rotation only contribute to the
//! translation metrics not at all and to the AUC through their rotation error.

use alloc::vec::Vec;

use crate::geometry::{dist_rot, dist_trans, RelativePose, DEGENERATE_NORM};
use crate::{Error, Result};

pub const ACCURACY_THRESHOLDS_DEG: [f64; 3] = [5.0, 15.0, 30.0];
pub const AUC_MAX_DEG: u32 = 30;

/// Error charged to a pair whose variant produced no pose at all.
pub const FAILED_ROT_ERR_DEG: f64 = 180.0;
pub const FAILED_TRANS_ERR_DEG: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorRow {
    pub rot_err_deg: f64,
    /// `None` for rotation-only evaluation or a ground truth without
    /// translation direction.
    pub trans_err_deg: Option<f64>,
}

impl ErrorRow {
    pub fn new(rot_err_deg: f64, trans_err_deg: Option<f64>) -> Self {
        ErrorRow {
            rot_err_deg,
            trans_err_deg,
        }
    }

    fn joint(&self) -> f64 {
        match self.trans_err_deg {
            Some(t) => self.rot_err_deg.max(t),
            None => self.rot_err_deg,
        }
    }
}

/// Rotation and translation-direction error of `pose` against `gt`.
///
/// `pose = None` (every estimator call failed) is charged the maximum error.
/// An estimate without translation direction is charged 90° when the ground
/// truth has one.
pub fn pair_errors(pose: Option<&RelativePose>, gt: &RelativePose, rotation_only: bool) -> ErrorRow {
    let gt_has_dir = gt.translation.norm() >= DEGENERATE_NORM;
    let want_trans = !rotation_only && gt_has_dir;
    let Some(pose) = pose else {
        return ErrorRow::new(FAILED_ROT_ERR_DEG, want_trans.then_some(FAILED_TRANS_ERR_DEG));
    };
    let rot = dist_rot(&pose.rotation, &gt.rotation).to_degrees();
    let trans = want_trans.then(|| match dist_trans(&pose.translation, &gt.translation) {
        (d, true) => d.to_degrees(),
        (_, false) => FAILED_TRANS_ERR_DEG,
    });
    ErrorRow::new(rot, trans)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum AucConvention {
    /// Accuracy of `max(rot, trans)` per threshold.
    #[default]
    JointMax,
    /// Mean of the separate rotation and translation AUCs.
    MeanOfBoth,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Aggregates {
    pub pairs: usize,
    /// Pairs that carry a translation error.
    pub trans_pairs: usize,
    pub mre: f64,
    pub mte: Option<f64>,
    /// Percent of pairs under 5, 15 and 30 degrees.
    pub r_acc: [f64; 3],
    pub t_acc: Option<[f64; 3]>,
    pub auc30: f64,
    pub auc_convention: AucConvention,
}

fn percent(hits: usize, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

fn under<'a>(values: impl Iterator<Item = &'a f64>, tau: f64) -> usize {
    values.filter(|v| **v < tau).count()
}

/// AUC over integer thresholds `1..=30` as a percentage.
fn auc(values: &[f64]) -> f64 {
    let hits: usize = (1..=AUC_MAX_DEG).map(|t| under(values.iter(), t as f64)).sum();
    100.0 * hits as f64 / (AUC_MAX_DEG as f64 * values.len() as f64)
}

pub fn aggregate(rows: &[ErrorRow]) -> Result<Aggregates> {
    aggregate_with(rows, AucConvention::JointMax)
}

pub fn aggregate_with(rows: &[ErrorRow], convention: AucConvention) -> Result<Aggregates> {
    if rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let n = rows.len();
    let rot: Vec<f64> = rows.iter().map(|r| r.rot_err_deg).collect();
    let trans: Vec<f64> = rows.iter().filter_map(|r| r.trans_err_deg).collect();
    let mre = rot.iter().sum::<f64>() / n as f64;
    let mte = (!trans.is_empty()).then(|| trans.iter().sum::<f64>() / trans.len() as f64);
    let r_acc = ACCURACY_THRESHOLDS_DEG.map(|t| percent(under(rot.iter(), t), n));
    let t_acc = (!trans.is_empty())
        .then(|| ACCURACY_THRESHOLDS_DEG.map(|t| percent(under(trans.iter(), t), trans.len())));
    let auc30 = match convention {
        AucConvention::JointMax => {
            let joint: Vec<f64> = rows.iter().map(ErrorRow::joint).collect();
            auc(&joint)
        }
        AucConvention::MeanOfBoth if trans.is_empty() => auc(&rot),
        AucConvention::MeanOfBoth => (auc(&rot) + auc(&trans)) / 2.0,
    };
    Ok(Aggregates {
        pairs: n,
        trans_pairs: trans.len(),
        mre,
        mte,
        r_acc,
        t_acc,
        auc30,
        auc_convention: convention,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub threshold_deg: u32,
    pub rot_acc: f64,
    pub trans_acc: Option<f64>,
    pub joint_acc: f64,
}

/// Accuracy at every integer threshold `1..=30`; always 30 points.
pub fn accuracy_curve(rows: &[ErrorRow]) -> Result<Vec<CurvePoint>> {
    if rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let n = rows.len();
    let trans: Vec<f64> = rows.iter().filter_map(|r| r.trans_err_deg).collect();
    Ok((1..=AUC_MAX_DEG)
        .map(|t| {
            let tau = t as f64;
            CurvePoint {
                threshold_deg: t,
                rot_acc: percent(under(rows.iter().map(|r| &r.rot_err_deg), tau), n),
                trans_acc: (!trans.is_empty()).then(|| percent(under(trans.iter(), tau), trans.len())),
                joint_acc: percent(rows.iter().filter(|r| r.joint() < tau).count(), n),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct YawBucket {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub count: usize,
    pub aggregates: Option<Aggregates>,
}

/// Groups rows by yaw into half-open buckets `[e_i, e_{i+1})`. Rows outside
/// every bucket are dropped.
pub fn yaw_sweep(
    rows: &[(ErrorRow, f64)],
    edges_deg: &[f64],
    convention: AucConvention,
) -> Result<Vec<YawBucket>> {
    if edges_deg.len() < 2 || edges_deg.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidBuckets);
    }
    edges_deg
        .windows(2)
        .map(|w| {
            let members: Vec<ErrorRow> = rows
                .iter()
                .filter(|(_, yaw)| *yaw >= w[0] && *yaw < w[1])
                .map(|(r, _)| *r)
                .collect();
            let aggregates = if members.is_empty() {
                None
            } else {
                Some(aggregate_with(&members, convention)?)
            };
            Ok(YawBucket {
                lo_deg: w[0],
                hi_deg: w[1],
                count: members.len(),
                aggregates,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;

    #[test]
    fn zero_error_is_perfect() {
        let a = aggregate(&[ErrorRow::new(0.0, Some(0.0)); 3]).unwrap();
        assert_eq!(a.mre, 0.0);
        assert_eq!(a.r_acc, [100.0; 3]);
        assert_eq!(a.t_acc, Some([100.0; 3]));
        assert_eq!(a.auc30, 100.0);
    }

    #[test]
    fn auc_single_ten_degree_pair() {
        // 10 < tau passes for tau = 11..=30: 20 of 30 thresholds.
        let a = aggregate(&[ErrorRow::new(10.0, Some(10.0))]).unwrap();
        assert_abs_diff_eq!(a.auc30, 100.0 * 20.0 / 30.0, epsilon = 1e-9);
    }

    #[test]
    fn auc_joint_uses_worse_error() {
        let a = aggregate(&[ErrorRow::new(10.0, Some(40.0))]).unwrap();
        assert_eq!(a.r_acc[1], 100.0);
        assert_eq!(a.t_acc.unwrap()[1], 0.0);
        assert_abs_diff_eq!(a.auc30, 0.0, epsilon = 1e-9);
        let m = aggregate_with(&[ErrorRow::new(10.0, Some(40.0))], AucConvention::MeanOfBoth).unwrap();
        assert_abs_diff_eq!(m.auc30, 100.0 * 20.0 / 60.0, epsilon = 1e-9);
    }

    #[test]
    fn rotation_only_rows() {
        let a = aggregate(&[ErrorRow::new(4.0, None), ErrorRow::new(20.0, Some(2.0))]).unwrap();
        assert_eq!(a.trans_pairs, 1);
        assert_eq!(a.mte, Some(2.0));
        assert_eq!(a.r_acc, [50.0, 50.0, 100.0]);
        assert_eq!(aggregate(&[]), Err(Error::EmptyReport));
    }

    #[test]
    fn pair_error_examples() {
        let gt = RelativePose::new(Rotation::about_z(40f64.to_radians()), Vector3::x());
        let e = pair_errors(Some(&gt), &gt, false);
        assert_eq!(e, ErrorRow::new(0.0, Some(0.0)));
        let est = RelativePose::new(Rotation::about_z(10f64.to_radians()), Vector3::x());
        let e = pair_errors(Some(&est), &gt, true);
        assert_abs_diff_eq!(e.rot_err_deg, 30.0, epsilon = 1e-9);
        assert_eq!(e.trans_err_deg, None);
        assert_eq!(pair_errors(None, &gt, false), ErrorRow::new(180.0, Some(90.0)));
        let pure_rot = RelativePose::new(gt.rotation, Vector3::zeros());
        assert_eq!(pair_errors(Some(&est), &pure_rot, false).trans_err_deg, None);
        let no_dir = RelativePose::new(gt.rotation, Vector3::zeros());
        assert_eq!(pair_errors(Some(&no_dir), &gt, false).trans_err_deg, Some(90.0));
    }

    #[test]
    fn curve_has_thirty_monotone_rows() {
        let rows = [ErrorRow::new(3.2, Some(7.9)), ErrorRow::new(29.5, None), ErrorRow::new(0.5, Some(45.0))];
        let c = accuracy_curve(&rows).unwrap();
        assert_eq!(c.len(), 30);
        for w in c.windows(2) {
            assert!(w[0].rot_acc <= w[1].rot_acc);
            assert!(w[0].joint_acc <= w[1].joint_acc);
            assert!(w[0].trans_acc <= w[1].trans_acc);
        }
        let mean_joint = c.iter().map(|p| p.joint_acc).sum::<f64>() / 30.0;
        assert_abs_diff_eq!(mean_joint, aggregate(&rows).unwrap().auc30, epsilon = 1e-9);
    }

    #[test]
    fn sweep_half_open() {
        let rows = [
            (ErrorRow::new(1.0, None), 10.0),
            (ErrorRow::new(2.0, None), 50.0),
            (ErrorRow::new(3.0, None), 64.9),
            (ErrorRow::new(4.0, None), 179.0),
        ];
        let b = yaw_sweep(&rows, &[0.0, 50.0, 65.0, 180.0], AucConvention::JointMax).unwrap();
        assert_eq!(b.iter().map(|x| x.count).collect::<Vec<_>>(), vec![1, 2, 1]);
        assert_eq!(b[1].aggregates.as_ref().unwrap().mre, 2.5);

        let all = yaw_sweep(&rows, &[0.0, 180.0], AucConvention::JointMax).unwrap();
        let plain: Vec<ErrorRow> = rows.iter().map(|r| r.0).collect();
        assert_eq!(all[0].aggregates.as_ref(), Some(&aggregate(&plain).unwrap()));

        let empty = yaw_sweep(&rows, &[100.0, 120.0], AucConvention::JointMax).unwrap();
        assert_eq!((empty[0].count, empty[0].aggregates.is_none()), (0, true));
        assert_eq!(
            yaw_sweep(&rows, &[0.0, 0.0], AucConvention::JointMax),
            Err(Error::InvalidBuckets)
        );
    }
}
