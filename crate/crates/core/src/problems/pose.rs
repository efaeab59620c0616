//! Planar poses and orientation errors on SO(2) and SO(3).

use nalgebra::{Quaternion, Vector2, Vector3};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut r = a - two_pi * ((a + T::pi()) / two_pi).floor();
    if r <= -T::pi() {
        r += two_pi;
    }
    if r > T::pi() {
        r -= two_pi;
    }
    r
}

/// Signed angular difference `a - b` wrapped to `(-π, π]`.
pub fn so2_error<T: Real>(a: T, b: T) -> T {
    wrap_angle(a - b)
}

/// Rotation vector of `q_b⁻¹ ⊗ q_a`. Quaternions are `(w, x, y, z)` and must
/// be unit length; `q` and `-q` describe the same rotation.
pub fn so3_error<T: Real>(q_a: &Quaternion<T>, q_b: &Quaternion<T>) -> Result<Vector3<T>> {
    let tol = T::lit(1e-9).max(T::default_epsilon() * T::lit(100.0));
    for (name, q) in [("first", q_a), ("second", q_b)] {
        if (q.norm() - T::one()).abs() > tol {
            return invalid(format!("{name} quaternion is not unit length (norm {})", q.norm()));
        }
    }
    let mut rel = q_b.conjugate() * q_a;
    if rel.w < T::zero() {
        rel = -rel;
    }
    let v = rel.imag();
    let s = v.norm();
    if s == T::zero() {
        return Ok(Vector3::zeros());
    }
    let angle = T::lit(2.0) * s.atan2(rel.w);
    Ok(v * (angle / s))
}

/// Position and heading in the plane, heading wrapped to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2<T: Real> {
    pub p: Vector2<T>,
    pub theta: T,
}

impl<T: Real> Pose2<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self {
            p: Vector2::new(x, y),
            theta: wrap_angle(theta),
        }
    }

    /// Maps a body-frame point to the world frame.
    pub fn transform(&self, local: &Vector2<T>) -> Vector2<T> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(c * local.x - s * local.y, s * local.x + c * local.y) + self.p
    }

    /// Maps a world-frame point to the body frame.
    pub fn inverse_transform(&self, world: &Vector2<T>) -> Vector2<T> {
        let (s, c) = self.theta.sin_cos();
        let d = world - self.p;
        Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    /// Rotates a body-frame direction into the world frame.
    pub fn rotate(&self, local: &Vector2<T>) -> Vector2<T> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(c * local.x - s * local.y, s * local.x + c * local.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn so2_examples() {
        assert_eq!(so2_error(1.3, 1.3), 0.0);
        assert!((so2_error(PI - 0.1, -PI + 0.1).abs() - 0.2).abs() < 1e-12);
        assert!((so2_error(0.3f64, -0.2) - 0.5).abs() < 1e-15);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
    }

    #[test]
    fn so3_examples() {
        let id = Quaternion::new(1.0, 0.0, 0.0, 0.0);
        let q = Quaternion::new(0.3f64, 0.5, -0.1, 0.2).normalize();
        assert!(so3_error(&q, &q).unwrap().norm() < 1e-15);
        assert!(so3_error(&q, &(-q)).unwrap().norm() < 1e-12);
        let rz = Quaternion::new(FRAC_PI_4.cos(), 0.0, 0.0, FRAC_PI_4.sin());
        let e = so3_error(&rz, &id).unwrap();
        assert!((e - Vector3::new(0.0, 0.0, FRAC_PI_2)).norm() < 1e-9);
        assert!(so3_error(&Quaternion::new(2.0, 0.0, 0.0, 0.0), &id).is_err());
    }

    #[test]
    fn pose_wraps_and_transforms() {
        let p = Pose2::new(1.0, 2.0, 3.0 * PI);
        assert!((p.theta - PI).abs() < 1e-12);
        let q = Pose2::new(0.5, -0.2, 0.7);
        let w = q.transform(&Vector2::new(0.1, 0.3));
        let back = q.inverse_transform(&w);
        assert!((back - Vector2::new(0.1, 0.3)).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn errors_bounded_by_pi(a in -50.0f64..50.0, b in -50.0f64..50.0,
                                qa in prop::array::uniform4(-1.0f64..1.0),
                                qb in prop::array::uniform4(-1.0f64..1.0)) {
            prop_assert!(so2_error(a, b).abs() <= PI + 1e-12);
            let qa = Quaternion::new(qa[0], qa[1], qa[2], qa[3]);
            let qb = Quaternion::new(qb[0], qb[1], qb[2], qb[3]);
            prop_assume!(qa.norm() > 1e-3 && qb.norm() > 1e-3);
            let e = so3_error(&qa.normalize(), &qb.normalize()).unwrap();
            prop_assert!(e.norm() <= PI + 1e-12);
        }
    }
}
