//! PD-tracked six-DoF platform.
//!
//! The platform is kinematically dominant: forces from the robot never act
//! back on it. Its pose is the center of the top surface; the box spans
//! `[-w/2, w/2] × [-l/2, l/2] × [-h, 0]` in its own frame.

use crate::spatial::{euler_rates_to_angular_velocity, euler_to_rotation, EulerXYZ, FrameTransform, Vec3};
use crate::trajgen::{PlatformSample, PlatformTrajectory, Range};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-DoF PD gains as sampled (x, y, z, roll, pitch, yaw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformGains {
    pub kp: [f64; 6],
    pub kd: [f64; 6],
}

impl PlatformGains {
    pub fn uniform(kp: f64, kd: f64) -> Self {
        Self { kp: [kp; 6], kd: [kd; 6] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformGainRanges {
    pub kp: Range,
    pub kd: Range,
}

impl PlatformGainRanges {
    pub fn training() -> Self {
        Self { kp: Range::new(1.0, 1.5), kd: Range::new(0.02, 0.03) }
    }

    pub fn testing() -> Self {
        Self { kp: Range::new(0.5, 2.0), kd: Range::new(0.01, 0.04) }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PlatformGains {
        let mut g = PlatformGains { kp: [0.0; 6], kd: [0.0; 6] };
        for k in g.kp.iter_mut() {
            *k = self.kp.sample(rng);
        }
        for k in g.kd.iter_mut() {
            *k = self.kd.sample(rng);
        }
        g
    }

    pub fn contains(&self, g: &PlatformGains) -> bool {
        g.kp.iter().all(|k| self.kp.contains(*k)) && g.kd.iter().all(|k| self.kd.contains(*k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSim {
    /// Width, length, height (m).
    pub shape: [f64; 3],
    pub gains: PlatformGains,
    /// Multipliers turning sampled gains into accelerations (1/s², 1/s).
    pub kp_scale: f64,
    pub kd_scale: f64,
    /// x, y, z, roll, pitch, yaw.
    pub pose: [f64; 6],
    /// Time derivative of `pose`.
    pub rates: [f64; 6],
}

impl PlatformSim {
    /// Starts exactly on the reference at `t = 0`.
    pub fn on_trajectory(traj: &PlatformTrajectory, shape: [f64; 3], gains: PlatformGains, kp_scale: f64, kd_scale: f64) -> Self {
        let s = traj.sample_clamped(0.0);
        Self { shape, gains, kp_scale, kd_scale, pose: s.pose_array(), rates: s.rate_array() }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.pose[0], self.pose[1], self.pose[2])
    }

    pub fn euler(&self) -> EulerXYZ {
        EulerXYZ::new(self.pose[3], self.pose[4], self.pose[5])
    }

    pub fn linear_velocity(&self) -> Vec3 {
        Vec3::new(self.rates[0], self.rates[1], self.rates[2])
    }

    pub fn angular_velocity(&self) -> Vec3 {
        euler_rates_to_angular_velocity(self.euler(), Vec3::new(self.rates[3], self.rates[4], self.rates[5]))
    }

    /// Platform frame expressed in the world.
    pub fn frame(&self) -> FrameTransform {
        FrameTransform::new(euler_to_rotation(self.euler()), self.position())
    }

    /// World velocity of the platform material point at world position `p`.
    pub fn point_velocity(&self, p: &Vec3) -> Vec3 {
        self.linear_velocity() + self.angular_velocity().cross(&(p - self.position()))
    }

    /// Whether a platform-frame point lies within the horizontal extent.
    pub fn within_extent(&self, p_local: &Vec3) -> bool {
        p_local.x.abs() <= 0.5 * self.shape[0] && p_local.y.abs() <= 0.5 * self.shape[1]
    }

    /// Per-DoF acceleration commanded by the PD law toward `reference`.
    pub fn pd_acceleration(&self, reference: &PlatformSample) -> [f64; 6] {
        let target = reference.pose_array();
        let target_rate = reference.rate_array();
        let mut acc = [0.0; 6];
        for k in 0..6 {
            acc[k] = self.kp_scale * self.gains.kp[k] * (target[k] - self.pose[k])
                + self.kd_scale * self.gains.kd[k] * (target_rate[k] - self.rates[k]);
        }
        acc
    }
}

/// Advances the platform by `dt` toward the reference sampled at `t`
/// (semi-implicit Euler).
pub fn step_platform(plat: &PlatformSim, traj: &PlatformTrajectory, t: f64, dt: f64) -> PlatformSim {
    let acc = plat.pd_acceleration(&traj.sample_clamped(t));
    let mut next = plat.clone();
    for k in 0..6 {
        next.rates[k] += acc[k] * dt;
        next.pose[k] += next.rates[k] * dt;
    }
    next
}
