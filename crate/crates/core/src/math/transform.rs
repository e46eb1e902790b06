use core::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::lie::{se3_exp, se3_log, Twist};
use crate::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// A rigid-body transform `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, checking that `rotation` is in SO(3) within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self::from_parts_unchecked(rotation, translation);
        t.validate()?;
        Ok(t)
    }

    pub const fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), translation)
    }

    /// From a (not necessarily normalized) quaternion `(qx, qy, qz, qw)`.
    pub fn from_quaternion(translation: Vector3<f64>, qx: f64, qy: f64, qz: f64, qw: f64) -> Result<Self> {
        let q = Quaternion::new(qw, qx, qy, qz);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 || !super::is_finite3(&translation) {
            return Err(Error::invalid("quaternion must be finite and non-zero"));
        }
        let uq = UnitQuaternion::from_quaternion(q);
        Ok(Self::from_parts_unchecked(
            uq.to_rotation_matrix().into_inner(),
            translation,
        ))
    }

    /// Unit quaternion `(qx, qy, qz, qw)` with `qw >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        let q = uq.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [q.i * s, q.j * s, q.k * s, q.w * s]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().all(|v| v.is_finite()) || !super::is_finite3(&self.translation) {
            return Err(Error::invalid("transform has non-finite entries"));
        }
        let ortho = (self.rotation * self.rotation.transpose() - Matrix3::identity())
            .abs()
            .max();
        let det = self.rotation.determinant();
        if ortho > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid("rotation is not in SO(3)"));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::from_parts_unchecked(rt, -(rt * self.translation))
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_parts_unchecked(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn exp(xi: &Twist) -> Self {
        se3_exp(xi)
    }

    pub fn log(&self) -> Result<Twist> {
        se3_log(self)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let s = Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        )
        .norm()
            * 0.5;
        s.atan2(c)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Re-projects the rotation onto SO(3); useful after long chains of
    /// compositions.
    pub fn orthonormalized(&self) -> Self {
        let uq = UnitQuaternion::from_matrix(&self.rotation);
        Self::from_parts_unchecked(uq.to_rotation_matrix().into_inner(), self.translation)
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// Applying the result equals applying `b` and then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}
