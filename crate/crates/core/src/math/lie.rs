//! SO(3)/SE(3) exponential and logarithm maps with the Jacobians the solvers
//! need.
//!
//! Twists are ordered `[rho; phi]`: translational part first, rotation vector
//! second. Perturbations are applied on the right, `T * exp(delta)`.

use core::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use super::RigidTransform;
use crate::{Error, Result};

/// A 6-vector `[rho; phi]` in the tangent space of SE(3).
pub type Twist = Vector6<f64>;

const SMALL_ANGLE: f64 = 1e-4;
/// Below this angle the Jacobian coefficients come from their Taylor series;
/// the closed forms cancel catastrophically there.
const SERIES_ANGLE: f64 = 0.1;
/// Largest rotation angle accepted by the logarithm.
const LOG_ANGLE_LIMIT: f64 = PI - 1e-6;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// sin(t)/t, (1-cos t)/t^2 and (t-sin t)/t^3.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
        )
    } else {
        let s = theta.sin();
        let half = (0.5 * theta).sin();
        let t2 = theta * theta;
        // 1 - cos written through the half angle to avoid cancellation
        (s / theta, 2.0 * half * half / t2, (theta - s) / (t2 * theta))
    }
}

pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (a, b, _) = rodrigues_coefficients(theta);
    let k = skew(phi);
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation vector of `r`. Valid for angles below `pi - 1e-6`.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = vee(&(r - r.transpose())) * 0.5;
    let sin_theta = w.norm();
    let theta = sin_theta.atan2(cos_theta);
    if theta > LOG_ANGLE_LIMIT {
        return Err(Error::NearSingularity { angle: theta });
    }
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        return Ok(w * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0));
    }
    if cos_theta < 0.0 {
        // sin(theta) loses relative precision towards pi; read the axis off the
        // symmetric part instead, (R + R^T)/2 - cos I = (1 - cos) a a^T.
        let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
        let mut i = 0;
        for k in 1..3 {
            if sym[(k, k)] > sym[(i, i)] {
                i = k;
            }
        }
        let mut axis: Vector3<f64> = sym.column(i).into_owned() / (sym[(i, i)] * (1.0 - cos_theta)).sqrt();
        axis /= axis.norm();
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        return Ok(axis * theta);
    }
    Ok(w * (theta / sin_theta))
}

/// Left Jacobian of SO(3); also the `V` matrix of the SE(3) exponential.
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (_, b, c) = rodrigues_coefficients(phi.norm());
    let k = skew(phi);
    Matrix3::identity() + k * b + k * k * c
}

pub fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let d = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 * (1.0 / 720.0 + t2 * (1.0 / 30240.0 + t2 / 1209600.0))
    } else {
        let (a, b, _) = rodrigues_coefficients(theta);
        (1.0 - a / (2.0 * b)) / (theta * theta)
    };
    let k = skew(phi);
    Matrix3::identity() - k * 0.5 + k * k * d
}

pub fn se3_exp(xi: &Twist) -> RigidTransform {
    let rho = Vector3::new(xi[0], xi[1], xi[2]);
    let phi = Vector3::new(xi[3], xi[4], xi[5]);
    RigidTransform::from_parts_unchecked(so3_exp(&phi), so3_left_jacobian(&phi) * rho)
}

pub fn se3_log(t: &RigidTransform) -> Result<Twist> {
    let phi = so3_log(&t.rotation)?;
    let rho = so3_left_jacobian_inv(&phi) * t.translation;
    Ok(Twist::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z))
}

/// Adjoint of `t`, so that `t * exp(xi) * t^-1 = exp(adjoint(t) * xi)`.
pub fn adjoint(t: &RigidTransform) -> Matrix6<f64> {
    let r = t.rotation;
    let mut ad = Matrix6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&(skew(&t.translation) * r));
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    ad
}

/// The coupling block `Q(rho, phi)` of the SE(3) left Jacobian.
fn se3_q(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (c1, c2, c3) = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (
            1.0 / 6.0 - t2 * (1.0 / 120.0 - t2 * (1.0 / 5040.0 - t2 * (1.0 / 362880.0 - t2 / 39916800.0))),
            1.0 / 24.0 - t2 * (1.0 / 720.0 - t2 * (1.0 / 40320.0 - t2 * (1.0 / 3628800.0 - t2 / 479001600.0))),
            1.0 / 120.0 - t2 * (1.0 / 2520.0 - t2 * (1.0 / 120960.0 - t2 * (1.0 / 9979200.0 - t2 / 1245404160.0))),
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        let t3 = t2 * theta;
        (
            (theta - s) / t3,
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t3),
        )
    };
    let p = skew(phi);
    let r = skew(rho);
    let prp = p * r * p;
    r * 0.5 + (p * r + r * p + prp) * c1 + (p * p * r + r * p * p - prp * 3.0) * c2
        + (prp * p + p * prp) * c3
}

fn se3_left_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let rho = Vector3::new(xi[0], xi[1], xi[2]);
    let phi = Vector3::new(xi[3], xi[4], xi[5]);
    let jinv = so3_left_jacobian_inv(&phi);
    let q = se3_q(&rho, &phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-jinv * q * jinv));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    out
}

/// Inverse right Jacobian: `log(exp(xi) * exp(d)) ~ xi + Jr^-1(xi) d`.
pub fn se3_right_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    se3_left_jacobian_inv(&(-xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(0.0..max_angle);
        let phi = axis * angle;
        Twist::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            phi.x,
            phi.y,
            phi.z,
        )
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(se3_log(&RigidTransform::identity()).unwrap(), Twist::zeros());
    }

    #[test]
    fn exp_of_tiny_twist_is_first_order() {
        let xi = Twist::new(1e-8, -2e-8, 3e-8, 4e-9, -5e-9, 6e-9);
        let t = se3_exp(&xi);
        let phi = Vector3::new(xi[3], xi[4], xi[5]);
        let expected_r = Matrix3::identity() + skew(&phi);
        assert!((t.rotation - expected_r).abs().max() < 1e-15);
        let rho = Vector3::new(xi[0], xi[1], xi[2]);
        assert!((t.translation - rho).abs().max() < 1e-15);
    }

    #[test]
    fn round_trip_random_twists() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let xi = random_twist(&mut rng, 3.0);
            let t = se3_exp(&xi);
            let back = se3_exp(&se3_log(&t).unwrap());
            assert!((back.rotation - t.rotation).abs().max() < 1e-9);
            assert!((back.translation - t.translation).abs().max() < 1e-9);
        }
    }

    #[test]
    fn log_near_pi_is_rejected() {
        let t = se3_exp(&Twist::new(0.0, 0.0, 0.0, 0.0, 0.0, PI));
        assert!(matches!(se3_log(&t), Err(Error::NearSingularity { .. })));
        // just inside the limit still works
        let t = se3_exp(&Twist::new(1.0, 0.0, 0.0, 0.0, PI - 1e-3, 0.0));
        let xi = se3_log(&t).unwrap();
        assert!((xi[4] - (PI - 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn adjoint_conjugates_exponentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let t = se3_exp(&random_twist(&mut rng, 3.0));
            let xi = random_twist(&mut rng, 1.0) * 0.3;
            let lhs = t * se3_exp(&xi) * t.inverse();
            let rhs = se3_exp(&(adjoint(&t) * xi));
            assert!((lhs.rotation - rhs.rotation).abs().max() < 1e-10);
            assert!((lhs.translation - rhs.translation).abs().max() < 1e-9);
        }
    }

    #[test]
    fn right_jacobian_inverse_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-6;
        for _ in 0..100 {
            let xi = random_twist(&mut rng, 2.5);
            let base = se3_exp(&xi);
            let analytic = se3_right_jacobian_inv(&xi);
            for k in 0..6 {
                let mut d = Twist::zeros();
                d[k] = h;
                let plus = se3_log(&(base * se3_exp(&d))).unwrap();
                let minus = se3_log(&(base * se3_exp(&(-d)))).unwrap();
                let col = (plus - minus) / (2.0 * h);
                let err = (col - analytic.column(k)).norm();
                assert!(err <= 1e-5 * (1.0 + col.norm()), "col {k}: err {err}");
            }
        }
    }

    #[test]
    fn small_angle_branches_are_continuous() {
        for &theta in &[0.99e-4, 1.01e-4] {
            let phi = Vector3::new(theta, 0.0, 0.0);
            let r = so3_exp(&phi);
            let back = so3_log(&r).unwrap();
            assert!((back - phi).norm() < 1e-15);
            let q = se3_q(&Vector3::new(1.0, 2.0, 3.0), &phi);
            let q0 = se3_q(&Vector3::new(1.0, 2.0, 3.0), &Vector3::zeros());
            assert!((q - q0).abs().max() < 1e-3);
        }
    }

    #[test]
    fn log_is_smooth_at_small_angles() {
        // difference quotients of the logarithm stay accurate where the
        // closed-form coefficients would cancel
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-6;
        for &angle in &[2e-4, 1e-3, 1e-2, 0.09, 0.11] {
            let mut xi = random_twist(&mut rng, 1.0);
            let phi = Vector3::new(xi[3], xi[4], xi[5]).normalize() * angle;
            xi.fixed_rows_mut::<3>(3).copy_from(&phi);
            let base = se3_exp(&xi);
            let analytic = se3_right_jacobian_inv(&xi);
            for k in 0..6 {
                let mut d = Twist::zeros();
                d[k] = h;
                let col = (se3_log(&(base * se3_exp(&d))).unwrap() - se3_log(&(base * se3_exp(&(-d)))).unwrap())
                    / (2.0 * h);
                assert!((col - analytic.column(k)).norm() <= 1e-7 * (1.0 + col.norm()), "angle {angle}, col {k}");
            }
        }
    }

    #[test]
    fn series_and_closed_forms_agree_at_the_switch() {
        let rho = Vector3::new(1.0, -2.0, 0.5);
        let below = Vector3::new(0.6, 0.0, 0.8) * (SERIES_ANGLE * (1.0 - 1e-12));
        let above = Vector3::new(0.6, 0.0, 0.8) * (SERIES_ANGLE * (1.0 + 1e-12));
        let gap = (se3_q(&rho, &below) - se3_q(&rho, &above)).abs().max();
        assert!(gap < 1e-13, "gap {gap}");
        assert!((so3_left_jacobian_inv(&below) - so3_left_jacobian_inv(&above)).abs().max() < 1e-13);
    }
}
