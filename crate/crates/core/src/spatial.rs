//! Frames, rotations and frame conversions.
//!
//! Three frames appear throughout the crate: the world frame `W`, the robot
//! body frame `B` and the platform frame `P` (origin at the center of the
//! platform's top surface). Orientations use the extrinsic x-y-z
//! (roll-pitch-yaw) convention, `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Three-vector of reals (meters, m/s, rad or rad/s depending on context).
pub type Vec3 = Vector3<f64>;

/// Distance from `|pitch| = π/2` inside which angle extraction is refused.
pub const GIMBAL_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("euler extraction is degenerate: pitch within {GIMBAL_EPS} of ±π/2")]
    GimbalLock,
}

/// Roll, pitch, yaw in radians (extrinsic x-y-z).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerXYZ {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

impl EulerXYZ {
    pub const fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    /// Same angles wrapped into `(-π, π]`.
    pub fn canonical(self) -> Self {
        Self::new(wrap_angle(self.roll), wrap_angle(self.pitch), wrap_angle(self.yaw))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }

    pub fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.yaw.is_finite()
    }
}

/// Proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rot_x(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn apply_inverse(&self, v: &Vec3) -> Vec3 {
        self.0.tr_mul(v)
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// Rotation by the axis-angle vector `w` (Rodrigues formula).
    pub fn from_rotation_vector(w: &Vec3) -> Self {
        let theta = w.norm();
        if theta < 1e-12 {
            return Self(Matrix3::identity() + skew(w));
        }
        let k = skew(&(w / theta));
        let (s, c) = theta.sin_cos();
        Self(Matrix3::identity() + k * s + k * k * (1.0 - c))
    }

    /// Gram-Schmidt re-orthonormalization, used after numerical integration.
    pub fn orthonormalized(&self) -> Self {
        let x = self.0.column(0).normalize();
        let y0 = self.0.column(1);
        let y = (y0 - x * x.dot(&y0)).normalize();
        let z = x.cross(&y);
        Self(Matrix3::from_columns(&[x, y, z]))
    }

    /// Max-abs entry of `R Rᵀ - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0 * self.0.transpose() - Matrix3::identity()).abs().max()
    }

    /// Gravity-relative roll and pitch. Total: valid for any orientation.
    pub fn tilt(&self) -> (f64, f64) {
        let m = &self.0;
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        (roll, pitch)
    }

    /// Heading of the body x axis projected on the horizontal plane.
    pub fn heading(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }
}

/// `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn euler_to_rotation(e: EulerXYZ) -> Rotation {
    Rotation::rot_z(e.yaw)
        .compose(&Rotation::rot_y(e.pitch))
        .compose(&Rotation::rot_x(e.roll))
}

/// Inverse of [`euler_to_rotation`].
pub fn rotation_to_euler(r: &Rotation) -> Result<EulerXYZ, SpatialError> {
    let m = r.matrix();
    let sp = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    if (pitch.abs() - PI / 2.0).abs() < GIMBAL_EPS {
        return Err(SpatialError::GimbalLock);
    }
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    Ok(EulerXYZ::new(roll, pitch, yaw))
}

/// Expresses a world-frame vector in the frame whose orientation is `frame_rot`.
pub fn world_to_frame(v_world: &Vec3, frame_rot: &Rotation) -> Vec3 {
    frame_rot.apply_inverse(v_world)
}

pub fn frame_to_world(v_frame: &Vec3, frame_rot: &Rotation) -> Vec3 {
    frame_rot.apply(v_frame)
}

/// Planar velocity of a point at `p_xy` on a body spinning at `omega_z`: `ω ẑ × p`.
pub fn planar_cross(omega_z: f64, p_xy: (f64, f64)) -> (f64, f64) {
    (-omega_z * p_xy.1, omega_z * p_xy.0)
}

/// World angular velocity produced by extrinsic x-y-z Euler angle rates.
pub fn euler_rates_to_angular_velocity(e: EulerXYZ, rates: Vec3) -> Vec3 {
    let (sy, cy) = e.yaw.sin_cos();
    let (sp, cp) = e.pitch.sin_cos();
    let (dr, dp, dy) = (rates.x, rates.y, rates.z);
    Vec3::new(cy * cp * dr - sy * dp, sy * cp * dr + cy * dp, -sp * dr + dy)
}

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl FrameTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// Maps a point expressed in the parent frame into this frame.
    pub fn apply_inverse(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply_inverse(&(p - self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &FrameTransform) -> FrameTransform {
        FrameTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> FrameTransform {
        let rt = self.rotation.transpose();
        FrameTransform {
            rotation: rt,
            translation: -rt.apply(&self.translation),
        }
    }
}
