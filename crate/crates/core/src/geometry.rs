//! Rigid transforms, the pose distances used for scoring and evaluation, and
//! the yaw measure used to bucket image pairs by difficulty.
//!
//! All angles are radians except [`delta_yaw`], which reports degrees because
//! it is only ever compared against user-facing yaw ranges.

use core::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};

use crate::{Error, Result};

/// Rotation matrices must satisfy `RᵀR = I` and `det R = 1` to this tolerance.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Translations shorter than this carry no direction.
pub const DEGENERATE_NORM: f64 = 1e-8;

/// A proper rotation, stored as a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(into = "[f64; 9]", try_from = "[f64; 9]")
)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Accepts `m` only if it already is a rotation within [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateMatrix);
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = (m.determinant() - 1.0).abs();
        if ortho > ROTATION_TOLERANCE || det > ROTATION_TOLERANCE {
            return Err(Error::NotARotation {
                residual: ortho.max(det),
            });
        }
        Ok(Rotation(m))
    }

    /// Projects `m` onto SO(3) if its Frobenius distance to the projection is
    /// below `max_residual`.
    pub fn from_matrix_tolerant(m: Matrix3<f64>, max_residual: f64) -> Result<Self> {
        let r = project_to_rotation(&m)?;
        let residual = (m - r.0).norm();
        if residual >= max_residual {
            return Err(Error::NotARotation { residual });
        }
        Ok(r)
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_row_slice(v))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Rodrigues' formula. `axis` need not be normalized; a zero axis gives
    /// the identity.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let k = axis / n;
        let kx = k.cross_matrix();
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        Rotation(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
    }

    /// Exponential map of a rotation vector.
    pub fn exp(omega: &Vector3<f64>) -> Self {
        Self::from_axis_angle(omega, omega.norm())
    }

    pub fn about_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::x(), angle)
    }

    pub fn about_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::y(), angle)
    }

    pub fn about_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        angle_of(&self.0)
    }

    /// Unit quaternion `(w, x, y, z)` with `w ≥ 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.0));
        let (w, v) = (q.w, q.imag());
        if w < 0.0 {
            [-w, -v.x, -v.y, -v.z]
        } else {
            [w, v.x, v.y, v.z]
        }
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl From<Rotation> for [f64; 9] {
    fn from(r: Rotation) -> Self {
        r.to_row_major()
    }
}

impl TryFrom<[f64; 9]> for Rotation {
    type Error = Error;

    fn try_from(v: [f64; 9]) -> Result<Self> {
        Rotation::from_row_major(&v)
    }
}

/// Angle of a rotation matrix from `atan2(sin θ, cos θ)`, where `sin θ` comes
/// from the skew part and `cos θ = (tr − 1) / 2`. Equals the clamped
/// `acos((tr − 1) / 2)` but keeps full precision near 0 and π.
fn angle_of(m: &Matrix3<f64>) -> f64 {
    let cos = (m.trace() - 1.0) / 2.0;
    let skew = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    let sin = skew.norm() / 2.0;
    libm::atan2(sin, cos.clamp(-1.0, 1.0))
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vector3::zeros())
    }

    /// Parses a row-major 4×4 homogeneous transform. The rotation block is
    /// projected onto SO(3) if it is within `max_residual` of it.
    pub fn from_row_major(v: &[f64; 16], max_residual: f64) -> Result<Self> {
        let m = Matrix4::from_row_slice(v);
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3) ] - 1.0];
        if bottom.iter().any(|x| !(x.abs() <= ROTATION_TOLERANCE)) {
            return Err(Error::NotRigid);
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        if !t.iter().all(|x| x.is_finite()) {
            return Err(Error::NotRigid);
        }
        let rotation = match Rotation::from_matrix(r) {
            Ok(rot) => rot,
            Err(_) => Rotation::from_matrix_tolerant(r, max_residual)?,
        };
        Ok(Pose::new(rotation, t))
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt.apply(&self.translation)))
    }
}

/// Relative pose `T_B T_A⁻¹`; the translation is only meaningful up to scale.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RelativePose {
    pub rotation: Rotation,
    #[cfg_attr(feature = "serde", serde(with = "vec3"))]
    pub translation: Vector3<f64>,
}

impl RelativePose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        RelativePose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        RelativePose::new(Rotation::identity(), Vector3::zeros())
    }

    /// `self ∘ other`, i.e. the matrix product `T_self · T_other`.
    pub fn compose(&self, other: &RelativePose) -> RelativePose {
        RelativePose::new(
            self.rotation * other.rotation,
            self.rotation.apply(&other.translation) + self.translation,
        )
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        Pose::new(self.rotation, self.translation).to_homogeneous()
    }

    pub fn scaled(&self, s: f64) -> RelativePose {
        RelativePose::new(self.rotation, self.translation * s)
    }
}

impl From<Pose> for RelativePose {
    fn from(p: Pose) -> Self {
        RelativePose::new(p.rotation, p.translation)
    }
}

#[cfg(feature = "serde")]
mod vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(x, y, z))
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        RelativePose::from(*self).serialize(s)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let r = RelativePose::deserialize(d)?;
        Ok(Pose::new(r.rotation, r.translation))
    }
}

/// Distance between two relative poses, split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseDistance {
    pub rot_rad: f64,
    pub trans_rad: f64,
    pub total_rad: f64,
    /// False when the translation term was skipped, either by request or
    /// because one of the translations had no direction.
    pub trans_defined: bool,
}

/// `T_B T_A⁻¹` for world-to-camera poses `a` and `b`.
pub fn relative_pose(a: &Pose, b: &Pose) -> RelativePose {
    let rotation = b.rotation * a.rotation.transpose();
    let translation = b.translation - rotation.apply(&a.translation);
    RelativePose::new(rotation, translation)
}

/// Geodesic distance on SO(3): the angle of `r2 r1ᵀ`, in `[0, π]`.
pub fn dist_rot(r1: &Rotation, r2: &Rotation) -> f64 {
    angle_of(&(r2.0 * r1.0.transpose()))
}

/// Scale-free representative of a translation's line of sight.
///
/// The unit vector is rounded to single precision so that every positive
/// rescaling of the same direction maps to the same representative; the
/// residual error of about 6e-8 rad is far below anything an estimator
/// resolves.
pub fn canonical_direction(t: &Vector3<f64>) -> Option<Vector3<f64>> {
    let n = t.norm();
    if !(n >= DEGENERATE_NORM) || !n.is_finite() {
        return None;
    }
    let u = t / n;
    Some(u.map(|c| c as f32 as f64))
}

/// Sign-free angle between translation directions, in `[0, π/2]`.
///
/// Returns `(0, false)` if either translation is shorter than
/// [`DEGENERATE_NORM`].
pub fn dist_trans(t1: &Vector3<f64>, t2: &Vector3<f64>) -> (f64, bool) {
    match (canonical_direction(t1), canonical_direction(t2)) {
        (Some(a), Some(b)) => (axial_angle(&a, &b), true),
        _ => (0.0, false),
    }
}

/// `acos(|â·b̂|)` evaluated as `atan2(|a×b|, |a·b|)`.
fn axial_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    libm::atan2(a.cross(b).norm(), a.dot(b).abs())
}

/// Sum of rotation and translation-direction error. With `rotation_only` the
/// translation term is ignored.
pub fn dist_pose(p1: &RelativePose, p2: &RelativePose, rotation_only: bool) -> PoseDistance {
    let rot_rad = dist_rot(&p1.rotation, &p2.rotation);
    let (trans_rad, trans_defined) = if rotation_only {
        (0.0, false)
    } else {
        dist_trans(&p1.translation, &p2.translation)
    };
    PoseDistance {
        rot_rad,
        trans_rad,
        total_rad: rot_rad + trans_rad,
        trans_defined,
    }
}

/// How the difficulty angle of an image pair is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum YawMode {
    /// Twist of the world-frame relative rotation about the up axis.
    #[default]
    Twist,
    /// Full geodesic angle of the relative rotation.
    Geodesic,
}

/// Yaw change in degrees, in `[0, 180]`, between two world-to-camera poses.
///
/// The camera-to-world relative rotation `R_Bᵀ R_A` is split into a twist about
/// `up_axis` and a swing about an axis perpendicular to it; the twist angle is
/// returned.
pub fn delta_yaw(a: &Pose, b: &Pose, up_axis: &Vector3<f64>) -> f64 {
    delta_yaw_with(a, b, up_axis, YawMode::Twist)
}

pub fn delta_yaw_with(a: &Pose, b: &Pose, up_axis: &Vector3<f64>, mode: YawMode) -> f64 {
    let rel = b.rotation.transpose() * a.rotation;
    let rad = match mode {
        YawMode::Geodesic => rel.angle(),
        YawMode::Twist => {
            let [w, x, y, z] = rel.to_quaternion();
            let up = up_axis.normalize();
            let along = Vector3::new(x, y, z).dot(&up);
            2.0 * libm::atan2(along.abs(), w.abs())
        }
    };
    rad.to_degrees()
}

/// Nearest rotation to `m` in the Frobenius norm: the orthogonal polar factor,
/// with the smallest singular direction flipped if needed to make `det = +1`.
pub fn project_to_rotation(m: &Matrix3<f64>) -> Result<Rotation> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateMatrix);
    }
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::DegenerateMatrix);
    };
    let sv = svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smax > 0.0) || smin <= smax * 1e-12 {
        return Err(Error::DegenerateMatrix);
    }
    // nalgebra does not sort singular values, so flip whichever is smallest.
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        let imin = sv.imin();
        d[imin] = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&d) * v_t;
    Ok(Rotation(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn relative_pose_from_identity_is_target() {
        let b = Pose::new(
            Rotation::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.7),
            Vector3::new(0.3, -1.0, 2.0),
        );
        let rel = relative_pose(&Pose::identity(), &b);
        assert_abs_diff_eq!(rel.rotation.matrix(), b.rotation.matrix(), epsilon = 1e-15);
        assert_abs_diff_eq!(rel.translation, b.translation, epsilon = 1e-15);
    }

    #[test]
    fn relative_pose_pure_translation() {
        let a = Pose::new(Rotation::identity(), Vector3::new(1.0, 2.0, 3.0));
        let b = Pose::new(Rotation::identity(), Vector3::new(-1.0, 0.5, 4.0));
        let rel = relative_pose(&a, &b);
        assert_eq!(rel.rotation, Rotation::identity());
        assert_eq!(rel.translation, Vector3::new(-2.0, -1.5, 1.0));
    }

    #[test]
    fn dist_rot_examples() {
        let r = Rotation::from_axis_angle(&Vector3::new(0.2, -1.0, 0.4), 1.1);
        assert_eq!(dist_rot(&r, &r), 0.0);
        assert_abs_diff_eq!(
            dist_rot(&Rotation::identity(), &Rotation::about_z(FRAC_PI_2)),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        let half_turn = Rotation::from_axis_angle(&Vector3::new(1.0, 1.0, -2.0), PI);
        assert_abs_diff_eq!(dist_rot(&Rotation::identity(), &half_turn), PI, epsilon = 1e-12);
    }

    #[test]
    fn dist_trans_examples() {
        let x = Vector3::x();
        assert_abs_diff_eq!(dist_trans(&x, &Vector3::y()).0, FRAC_PI_2, epsilon = 1e-15);
        let t = Vector3::new(0.3, -2.0, 5.0);
        assert_eq!(dist_trans(&t, &-t), (0.0, true));
        let (d, ok) = dist_trans(&x, &Vector3::new(1.0, 1.0, 0.0));
        assert!(ok);
        assert_abs_diff_eq!(d, FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn dist_trans_degenerate_is_flagged() {
        assert_eq!(dist_trans(&Vector3::zeros(), &Vector3::x()), (0.0, false));
        assert_eq!(
            dist_trans(&Vector3::x(), &Vector3::new(1e-9, 0.0, 0.0)),
            (0.0, false)
        );
    }

    #[test]
    fn dist_pose_hand_composed() {
        let p1 = RelativePose::new(Rotation::about_z(10f64.to_radians()), Vector3::x());
        let p2 = RelativePose::new(Rotation::about_z(40f64.to_radians()), Vector3::y());
        let d = dist_pose(&p1, &p2, false);
        assert!(d.trans_defined);
        assert_abs_diff_eq!(d.total_rad, 30f64.to_radians() + FRAC_PI_2, epsilon = 1e-12);
        let r = dist_pose(&p1, &p2, true);
        assert!(!r.trans_defined);
        assert_abs_diff_eq!(r.total_rad, 30f64.to_radians(), epsilon = 1e-12);
        assert_eq!(dist_pose(&p1, &p1, false).total_rad, 0.0);
    }

    #[test]
    fn delta_yaw_examples() {
        let up = Vector3::y();
        let a = Pose::new(
            Rotation::from_axis_angle(&Vector3::new(0.3, 1.0, 0.1), 0.4),
            Vector3::new(1.0, 0.0, 0.0),
        );
        assert_abs_diff_eq!(delta_yaw(&a, &a, &up), 0.0, epsilon = 1e-9);

        let twist = Pose::new(Rotation::about_y(57f64.to_radians()), Vector3::zeros());
        assert_abs_diff_eq!(delta_yaw(&Pose::identity(), &twist, &up), 57.0, epsilon = 1e-9);

        let swing = Pose::new(
            Rotation::from_axis_angle(&Vector3::new(1.0, 0.0, 1.0), 57f64.to_radians()),
            Vector3::zeros(),
        );
        assert_abs_diff_eq!(delta_yaw(&Pose::identity(), &swing, &up), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            delta_yaw_with(&Pose::identity(), &swing, &up, YawMode::Geodesic),
            57.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn projection_examples() {
        let r = Rotation::from_axis_angle(&Vector3::new(-0.5, 0.2, 0.9), 2.3);
        let p = project_to_rotation(r.matrix()).unwrap();
        assert_abs_diff_eq!(p.matrix(), r.matrix(), epsilon = 1e-12);
        let p2 = project_to_rotation(&(r.matrix() * 2.0)).unwrap();
        assert_abs_diff_eq!(p2.matrix(), r.matrix(), epsilon = 1e-12);

        let theta = 0.6;
        let mean = (Rotation::about_z(theta).matrix() + Rotation::about_z(-theta).matrix()) / 2.0;
        let p = project_to_rotation(&mean).unwrap();
        assert_abs_diff_eq!(p.matrix(), &Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn projection_matches_brute_force_search() {
        // Mean of Rz(±θ) is diag(cos θ, cos θ, 1); search a grid of rotation
        // vectors around the identity for the smallest Frobenius distance.
        let theta = 0.6;
        let mean = (Rotation::about_z(theta).matrix() + Rotation::about_z(-theta).matrix()) / 2.0;
        let mut best = (f64::INFINITY, Vector3::zeros());
        let steps = 20;
        for i in -steps..=steps {
            for j in -steps..=steps {
                for k in -steps..=steps {
                    let w = Vector3::new(i as f64, j as f64, k as f64) * 0.05;
                    let d = (Rotation::exp(&w).matrix() - mean).norm();
                    if d < best.0 {
                        best = (d, w);
                    }
                }
            }
        }
        assert_eq!(best.1, Vector3::zeros());
        let p = project_to_rotation(&mean).unwrap();
        assert!((p.matrix() - mean).norm() <= best.0 + 1e-12);
    }

    #[test]
    fn projection_flips_reflections() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        let p = project_to_rotation(&m).unwrap();
        assert_abs_diff_eq!(p.matrix().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_rejects_rank_deficient() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert_eq!(project_to_rotation(&m), Err(Error::DegenerateMatrix));
        assert_eq!(project_to_rotation(&Matrix3::zeros()), Err(Error::DegenerateMatrix));
    }

    #[test]
    fn tolerant_ingestion_threshold() {
        let r = Rotation::about_x(0.3);
        let mut noisy = *r.matrix();
        noisy[(0, 1)] += 1e-4;
        let p = Rotation::from_matrix_tolerant(noisy, 1e-3).unwrap();
        assert!(Rotation::from_matrix(*p.matrix()).is_ok());
        noisy[(0, 1)] += 0.1;
        assert!(matches!(
            Rotation::from_matrix_tolerant(noisy, 1e-3),
            Err(Error::NotARotation { .. })
        ));
    }

    #[test]
    fn pose_row_major_parsing() {
        let r = Rotation::about_y(0.4);
        let m = r.matrix();
        let v = [
            m[(0, 0)], m[(0, 1)], m[(0, 2)], 1.0,
            m[(1, 0)], m[(1, 1)], m[(1, 2)], 2.0,
            m[(2, 0)], m[(2, 1)], m[(2, 2)], 3.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        let p = Pose::from_row_major(&v, 1e-3).unwrap();
        assert_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0));
        let mut bad = v;
        bad[12] = 0.5;
        assert_eq!(Pose::from_row_major(&bad, 1e-3), Err(Error::NotRigid));
    }
}
