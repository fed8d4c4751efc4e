//! Collision rule shared by episode termination and the evaluation metrics.

use super::model::{RobotModel, NUM_LEGS};
use super::platform::PlatformSim;
use super::robot::RobotState;
use serde::{Deserialize, Serialize};

/// Base height in the platform frame below which the robot counts as fallen (m).
pub const MIN_BASE_HEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CollisionKind {
    /// A body-box corner touched the platform.
    Body,
    /// A knee touched the platform.
    Knee,
    /// Base fell below the minimum height.
    Fallen,
    /// Base left the platform's horizontal extent.
    OffPlatform,
    /// The integrator diverged.
    Blowup,
}

fn penetrates(plat: &PlatformSim, local: &nalgebra::Vector3<f64>) -> bool {
    plat.within_extent(local) && local.z <= 0.0 && local.z >= -plat.shape[2]
}

/// First matching collision condition, if any.
pub fn collision_kind(state: &RobotState, plat: &PlatformSim, robot: &RobotModel) -> Option<CollisionKind> {
    let frame = plat.frame();
    let base = frame.apply_inverse(&state.position);
    if !plat.within_extent(&base) {
        return Some(CollisionKind::OffPlatform);
    }
    if base.z < MIN_BASE_HEIGHT {
        return Some(CollisionKind::Fallen);
    }
    for c in robot.body_corners() {
        let w = state.position + state.orientation.apply(&c);
        if penetrates(plat, &frame.apply_inverse(&w)) {
            return Some(CollisionKind::Body);
        }
    }
    for leg in 0..NUM_LEGS {
        let k = robot.knee_position(leg, &state.q[3 * leg..3 * leg + 3]);
        let w = state.position + state.orientation.apply(&k);
        if penetrates(plat, &frame.apply_inverse(&w)) {
            return Some(CollisionKind::Knee);
        }
    }
    None
}

pub fn detect_collision(state: &RobotState, plat: &PlatformSim, robot: &RobotModel) -> bool {
    collision_kind(state, plat, robot).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::platform::PlatformGains;
    use crate::spatial::{euler_to_rotation, EulerXYZ, Rotation, Vec3};
    use crate::trajgen::{PlatformTrajectory, Waypoint6};

    fn setup() -> (RobotModel, PlatformSim) {
        let traj = PlatformTrajectory::stationary(Waypoint6 { z: 2.0, ..Default::default() }, 10.0);
        let plat = PlatformSim::on_trajectory(&traj, [2.0, 2.0, 0.2], PlatformGains::uniform(1.0, 0.02), 400.0, 1600.0);
        (RobotModel::a1_like(), plat)
    }

    #[test]
    fn standing_is_not_a_collision() {
        let (m, p) = setup();
        let s = RobotState::standing(&m, Vec3::new(0.0, 0.0, 2.37), Rotation::identity(), Vec3::zeros(), Vec3::zeros());
        assert_eq!(collision_kind(&s, &p, &m), None);
    }

    #[test]
    fn leaving_the_extent_is_a_collision() {
        let (m, p) = setup();
        let s = RobotState::standing(&m, Vec3::new(1.5, 0.0, 2.37), Rotation::identity(), Vec3::zeros(), Vec3::zeros());
        assert_eq!(collision_kind(&s, &p, &m), Some(CollisionKind::OffPlatform));
    }

    #[test]
    fn rolled_body_hits_platform() {
        // Rolled 90°: the box's ±0.16 half-width becomes vertical; at base
        // height 0.15 the lower corners sit at 0.15 − 0.16 < 0.
        let (m, p) = setup();
        let r = euler_to_rotation(EulerXYZ::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let s = RobotState::standing(&m, Vec3::new(0.0, 0.0, 2.15), r, Vec3::zeros(), Vec3::zeros());
        assert_eq!(collision_kind(&s, &p, &m), Some(CollisionKind::Body));
    }

    #[test]
    fn low_base_is_fallen() {
        let (m, p) = setup();
        let s = RobotState::standing(&m, Vec3::new(0.0, 0.0, 2.04), Rotation::identity(), Vec3::zeros(), Vec3::zeros());
        assert_eq!(collision_kind(&s, &p, &m), Some(CollisionKind::Fallen));
    }

    #[test]
    fn deep_crouch_hits_knees() {
        let (m, p) = setup();
        let mut s = RobotState::standing(&m, Vec3::new(0.0, 0.0, 2.12), Rotation::identity(), Vec3::zeros(), Vec3::zeros());
        for leg in 0..4 {
            s.q[3 * leg + 1] = 0.0;
        }
        assert_eq!(collision_kind(&s, &p, &m), Some(CollisionKind::Knee));
    }
}
