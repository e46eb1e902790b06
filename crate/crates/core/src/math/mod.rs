//! Rigid-body transforms, SE(3) exponential/logarithm and a 3x3 symmetric
//! eigensolver.

mod eigen;
mod lie;
mod transform;

pub use eigen::{eig_sym3, SymmetricEigen3};
pub use lie::{
    adjoint, se3_exp, se3_log, se3_right_jacobian_inv, skew, so3_exp, so3_left_jacobian,
    so3_left_jacobian_inv, so3_log, Twist,
};
pub use transform::{compose, RigidTransform};

use nalgebra::Vector3;

/// A point or free vector in meters.
pub type Point3 = Vector3<f64>;

pub type Matrix3 = nalgebra::Matrix3<f64>;
pub type Vector3f = Vector3<f64>;
pub type Matrix6 = nalgebra::Matrix6<f64>;

pub(crate) fn is_finite3(v: &Vector3<f64>) -> bool {
    v.iter().all(|c| c.is_finite())
}
