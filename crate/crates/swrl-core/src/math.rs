//! Rigid transforms and small rotation helpers.
//!
//! Task-space vectors throughout the crate are ordered
//! `[x, y, z, roll, pitch, yaw]`: linear components first, then angular.
//! Angular rows carry angular velocities (or angle-axis displacements),
//! not Euler-angle rates.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Rigid transform: orthonormal rotation plus translation, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Transform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Transform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about a unit `axis`, no translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Transform {
            rotation: rotation_about(axis, angle),
            translation: Vector3::zeros(),
        }
    }

    /// Composition: `self` then `other` in `self`'s frame (`T_a * T_b`).
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Max-norm departure from orthonormality, `‖RᵀR − I‖_∞`.
    pub fn orthonormality_defect(&self) -> f64 {
        let d = self.rotation.transpose() * self.rotation - Matrix3::identity();
        d.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Rodrigues rotation about a unit axis.
pub fn rotation_about(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let k = skew(axis);
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

/// Skew-symmetric cross-product matrix `[v]×`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation from roll-pitch-yaw angles, composed as `Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn rotation_from_rpy(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    rotation_about(&Vector3::z(), yaw)
        * rotation_about(&Vector3::y(), pitch)
        * rotation_about(&Vector3::x(), roll)
}

/// Angle-axis vector (axis scaled by angle) of a rotation matrix.
///
/// Returns the zero vector for the identity; near π the axis is recovered
/// from the diagonal to stay well conditioned.
pub fn angle_axis_of(r: &Matrix3<f64>) -> Vector3<f64> {
    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    let axis_raw = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    // ‖axis_raw‖ = 2 sin(angle); atan2 keeps the angle well conditioned
    // near both 0 and π.
    let sin_angle = axis_raw.norm() / 2.0;
    let cos_angle = (trace - 1.0) / 2.0;
    let angle = sin_angle.atan2(cos_angle);
    if angle < 1e-12 {
        return Vector3::zeros();
    }
    if sin_angle > 1e-9 {
        axis_raw * (angle / (2.0 * sin_angle))
    } else {
        let angle = cos_angle.clamp(-1.0, 1.0).acos();
        // sin(angle) ~ 0: take axis from the dominant diagonal entry.
        let mut axis = Vector3::new(
            (r[(0, 0)] + 1.0).max(0.0).sqrt(),
            (r[(1, 1)] + 1.0).max(0.0).sqrt(),
            (r[(2, 2)] + 1.0).max(0.0).sqrt(),
        ) / std::f64::consts::SQRT_2;
        if axis_raw.norm() > 1e-9 {
            for i in 0..3 {
                if axis_raw[i] < 0.0 {
                    axis[i] = -axis[i];
                }
            }
        }
        let n = axis.norm();
        if n < 1e-12 {
            return Vector3::zeros();
        }
        axis * (angle / n)
    }
}

/// Yaw (rotation about +z) extracted from a rotation matrix, as the heading
/// of the rotated x-axis projected onto the x-y plane.
pub fn yaw_of(r: &Matrix3<f64>) -> f64 {
    r[(1, 0)].atan2(r[(0, 0)])
}

/// Wrap an angle difference into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a % two_pi;
    if x > std::f64::consts::PI {
        x -= two_pi;
    } else if x <= -std::f64::consts::PI {
        x += two_pi;
    }
    x
}

/// Linear interpolation that is exact at both endpoints.
pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a * (1.0 - t) + b * t
}

pub fn lerp6(a: &Vector6<f64>, b: &Vector6<f64>, t: f64) -> Vector6<f64> {
    a * (1.0 - t) + b * t
}
