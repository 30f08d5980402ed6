//! Randomized properties of the core, checked against independent
//! reimplementations where one exists.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use pose_consensus_core::benchmark::{select_pairs, PairYaw};
use pose_consensus_core::geometry::{delta_yaw_with, YawMode};
use pose_consensus_core::metrics::{accuracy_curve, aggregate, ErrorRow};
use pose_consensus_core::*;
use proptest::prelude::*;

fn rotation() -> impl Strategy<Value = Rotation> {
    // Uniform on SO(3): normalized Gaussian quaternion.
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("non-degenerate quaternion", |q| q.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|[w, x, y, z]| {
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
            Rotation::from_matrix(*q.to_rotation_matrix().matrix()).unwrap()
        })
}

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn pose() -> impl Strategy<Value = Pose> {
    (rotation(), vec3(10.0)).prop_map(|(r, t)| Pose::new(r, t))
}

fn rel() -> impl Strategy<Value = RelativePose> {
    (rotation(), vec3(10.0)).prop_map(|(r, t)| RelativePose::new(r, t))
}

/// Rotation angle via the quaternion, independent of the trace formula.
fn quaternion_angle(m: &Matrix3<f64>) -> f64 {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
    2.0 * q.imag().norm().atan2(q.w.abs())
}

fn homogeneous(r: &Rotation, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn dist_rot_matches_quaternion_angle(a in rotation(), b in rotation()) {
        let expected = quaternion_angle(&(b.matrix() * a.matrix().transpose()));
        prop_assert!((dist_rot(&a, &b) - expected).abs() <= 1e-9);
    }

    #[test]
    fn dist_rot_metric_basics(a in rotation(), b in rotation(), q in rotation()) {
        let d = dist_rot(&a, &b);
        prop_assert!((0.0..=PI).contains(&d));
        prop_assert_eq!(dist_rot(&a, &a), 0.0);
        prop_assert!((d - dist_rot(&b, &a)).abs() <= 1e-12);
        prop_assert!((dist_rot(&(a * q), &(b * q)) - d).abs() <= 1e-9);
        prop_assert!((dist_rot(&(q * a), &(q * b)) - d).abs() <= 1e-9);
    }

    #[test]
    fn dist_trans_scale_and_sign(a in vec3(5.0), b in vec3(5.0), s in 1e-3f64..1e3) {
        prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
        let base = dist_trans(&a, &b);
        prop_assert!((0.0..=PI / 2.0).contains(&base.0));
        prop_assert_eq!(dist_trans(&(a * s), &b), base);
        prop_assert_eq!(dist_trans(&(-a), &b), base);
        prop_assert_eq!(dist_trans(&b, &a), base);
    }

    #[test]
    fn relative_pose_composes(a in pose(), b in pose()) {
        let r = relative_pose(&a, &b);
        let composed = homogeneous(&r.rotation, &r.translation) * homogeneous(&a.rotation, &a.translation);
        let target = homogeneous(&b.rotation, &b.translation);
        prop_assert!((composed - target).amax() <= 1e-10);
        let same = relative_pose(&a, &a);
        prop_assert!((same.rotation.matrix() - Matrix3::identity()).amax() <= 1e-12);
        prop_assert!(same.translation.amax() <= 1e-12);
    }

    #[test]
    fn dist_pose_total_is_sum(a in rel(), b in rel(), rotation_only in any::<bool>()) {
        let d = dist_pose(&a, &b, rotation_only);
        prop_assert_eq!(d.rot_rad, dist_rot(&a.rotation, &b.rotation));
        if rotation_only || !d.trans_defined {
            prop_assert_eq!(d.total_rad, d.rot_rad);
        } else {
            prop_assert_eq!(d.total_rad, d.rot_rad + d.trans_rad);
        }
    }

    #[test]
    fn delta_yaw_symmetric_and_heading_invariant(a in pose(), b in pose(), heading in -PI..PI) {
        let up = Vector3::y();
        let ab = delta_yaw_with(&a, &b, &up, YawMode::Twist);
        prop_assert!((0.0..=180.0).contains(&ab));
        prop_assert!((ab - delta_yaw_with(&b, &a, &up, YawMode::Twist)).abs() <= 1e-9);
        // A common change of world heading: world-to-camera rotations pick
        // up a right factor.
        let w = Rotation::about_y(heading);
        let turn = |p: &Pose| Pose::new(p.rotation * w, p.translation);
        prop_assert!((ab - delta_yaw_with(&turn(&a), &turn(&b), &up, YawMode::Twist)).abs() <= 1e-9);
    }

    #[test]
    fn projection_is_idempotent_and_scale_free(r in rotation(), s in 0.1f64..10.0) {
        let p = project_to_rotation(&(r.matrix() * s)).unwrap();
        prop_assert!((p.matrix() - r.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn average_pose_is_a_rotation(samples in prop::collection::vec(rel(), 1..12)) {
        // Means of widely spread rotations can be rank deficient; those are
        // reported, never returned as garbage.
        if let Ok(avg) = average_pose(&samples) {
            let m = avg.rotation.matrix();
            prop_assert!((m.transpose() * m - Matrix3::identity()).amax() <= 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() <= 1e-9);
        }
    }
}

/// O(m²) reference: recomputes every mean from scratch.
fn brute_medoid(samples: &[RelativePose], rotation_only: bool) -> (usize, f64) {
    let m = samples.len();
    let means: Vec<f64> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i)
                .map(|j| dist_pose(&samples[i], &samples[j], rotation_only).total_rad)
                .sum::<f64>()
                / (m - 1) as f64
        })
        .collect();
    let best = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let idx = means.iter().position(|&x| x == best).unwrap();
    (idx, best)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn medoid_matches_reference(samples in prop::collection::vec(rel(), 2..=11), rotation_only in any::<bool>()) {
        let (i, d) = medoid(&samples, rotation_only).unwrap();
        let (bi, bd) = brute_medoid(&samples, rotation_only);
        prop_assert_eq!(i, bi);
        prop_assert!((d - bd).abs() <= 1e-12);
    }

    #[test]
    fn d_med_permutation_invariant(samples in prop::collection::vec(rel(), 2..=11), rot in 0usize..11) {
        let (_, d) = medoid(&samples, false).unwrap();
        let mut shifted = samples.clone();
        shifted.rotate_left(rot % samples.len());
        shifted.reverse();
        let (_, ds) = medoid(&shifted, false).unwrap();
        prop_assert!((d - ds).abs() <= 1e-12);
    }

    #[test]
    fn scores_ignore_translation_scale(samples in prop::collection::vec(rel(), 2..=11), base in rel(), s in 0.01f64..100.0) {
        let wrap = |poses: &[RelativePose]| -> Vec<EstimateSample> {
            poses.iter().map(|p| EstimateSample {
                pair_id: "p".into(),
                video_id: Some("v".into()),
                subset: FrameSubset::anchors_only(),
                outcome: EstimateOutcome::Ok(*p),
            }).collect()
        };
        let scaled: Vec<RelativePose> = samples.iter().map(|p| p.scaled(s)).collect();
        let a = score_video("v", &wrap(&samples), Some(&base), ScoreMode::Total, false).unwrap();
        let b = score_video("v", &wrap(&scaled), Some(&base.scaled(s)), ScoreMode::Total, false).unwrap();
        prop_assert_eq!(a.d_med, b.d_med);
        prop_assert_eq!(a.d_bias, b.d_bias);
        prop_assert_eq!(a.d_total, b.d_total);
        prop_assert_eq!(a.medoid_index, b.medoid_index);
    }
}

fn error_rows() -> impl Strategy<Value = Vec<ErrorRow>> {
    let row = (0.0f64..60.0, prop::option::of(0.0f64..60.0), 0u8..4).prop_map(|(r, t, snap)| {
        // Integer-valued errors exercise the strict threshold boundaries.
        if snap == 0 {
            ErrorRow::new(r.round(), t.map(f64::round))
        } else {
            ErrorRow::new(r, t)
        }
    });
    prop::collection::vec(row, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn curve_monotone_and_bounds_auc(rows in error_rows()) {
        let curve = accuracy_curve(&rows).unwrap();
        prop_assert_eq!(curve.len(), 30);
        for w in curve.windows(2) {
            prop_assert!(w[0].rot_acc <= w[1].rot_acc);
            prop_assert!(w[0].joint_acc <= w[1].joint_acc);
            prop_assert!(w[0].trans_acc <= w[1].trans_acc);
        }
        let agg = aggregate(&rows).unwrap();
        let mean_rot = curve.iter().map(|c| c.rot_acc).sum::<f64>() / 30.0;
        prop_assert!(agg.auc30 <= mean_rot + 1e-9);
        let mean_joint = curve.iter().map(|c| c.joint_acc).sum::<f64>() / 30.0;
        prop_assert!((agg.auc30 - mean_joint).abs() <= 1e-9);
        for a in agg.r_acc.iter().chain(agg.t_acc.iter().flatten()) {
            prop_assert!((0.0..=100.0).contains(a));
        }
    }

    #[test]
    fn selection_ignores_candidate_order(
        yaws in prop::collection::vec(0.0f64..180.0, 1..60),
        count in 0usize..70,
        seed in any::<u64>(),
        rot in 0usize..60,
    ) {
        let cands: Vec<PairYaw> = yaws.iter().enumerate()
            .map(|(i, &y)| PairYaw { pair_id: format!("p{i:03}"), yaw_deg: y })
            .collect();
        let mut shuffled = cands.clone();
        shuffled.rotate_left(rot % cands.len());
        shuffled.reverse();
        let a = select_pairs(&cands, 30.0, 120.0, count, seed);
        let b = select_pairs(&shuffled, 30.0, 120.0, count, seed);
        prop_assert_eq!(&a, &b);
        if let Ok(ids) = a {
            let eligible = yaws.iter().filter(|y| (30.0..=120.0).contains(*y)).count();
            prop_assert_eq!(ids.len(), count.min(eligible));
            prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

fn plan_inputs() -> impl Strategy<Value = (usize, usize)> {
    (0usize..12).prop_flat_map(|g| (g + 2..g + 40, Just(g)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn subsets_are_valid((n, g) in plan_inputs(), seed in any::<u64>(), vid in "[a-z0-9]{1,6}") {
        let check = |s: &FrameSubset| {
            s.interior.len() == g
                && s.interior.windows(2).all(|w| w[0] < w[1])
                && s.interior.iter().all(|&i| i >= 2 && i as usize <= n - 1)
        };
        prop_assert!(check(&uniform_subset(n, g).unwrap()));
        let random = random_subsets(n, g, 11, seed, "pair", &vid).unwrap();
        prop_assert_eq!(random.len(), 11);
        prop_assert!(random.iter().all(check));
        prop_assert_eq!(random, random_subsets(n, g, 11, seed, "pair", &vid).unwrap());
    }

    #[test]
    fn uniform_subset_monotone_in_length((n, g) in plan_inputs()) {
        let short = uniform_subset(n, g).unwrap();
        let long = uniform_subset(n + 1, g).unwrap();
        prop_assert!(short.interior.iter().zip(&long.interior).all(|(a, b)| a <= b));
    }

    #[test]
    fn too_short_videos_are_rejected(g in 0usize..12, short in 0usize..2) {
        let n = g + short;
        prop_assert_eq!(uniform_subset(n, g), Err(Error::VideoTooShort { n_frames: n, required: g + 2 }));
        prop_assert!(random_subsets(n, g, 3, 0, "p", "v").is_err());
    }
}
