//! Reduced-order physics: PD-tracked platform, floating-base quadruped with
//! kinematic legs, spring-damper point-foot contacts with Coulomb friction.

pub mod collision;
pub mod contact;
pub mod log;
pub mod model;
pub mod platform;
pub mod robot;

pub use collision::{collision_kind, detect_collision, CollisionKind};
pub use contact::{contact_forces, ContactResult};
pub use model::{
    apply_pd_targets, foot_kinematics, IntrinsicParams, IntrinsicRanges, RobotModel, INTRINSIC_DIM, NUM_JOINTS, NUM_LEGS,
    TORQUE_LIMIT,
};
pub use platform::{step_platform, PlatformGainRanges, PlatformGains, PlatformSim};
pub use robot::{step_robot, RobotState};

use crate::spatial::{Rotation, Vec3};
use crate::trajgen::PlatformTrajectory;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation diverged")]
    Blowup,
    #[error("invalid simulation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Control period (s).
    pub dt: f64,
    pub substeps: usize,
    pub gravity: f64,
    /// Normal contact stiffness (N/m) and damping (N·s/m).
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// Tangential stick spring (N/m) and damper (N·s/m).
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
    /// Platform [width, length, height] (m).
    pub platform_shape: [f64; 3],
    /// Scales mapping sampled platform gains to PD accelerations.
    pub platform_kp_scale: f64,
    pub platform_kd_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            substeps: 4,
            gravity: 9.81,
            contact_stiffness: 1e4,
            contact_damping: 100.0,
            tangential_stiffness: 5e3,
            tangential_damping: 50.0,
            platform_shape: [2.0, 2.0, 0.2],
            platform_kp_scale: 400.0,
            platform_kd_scale: 1600.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(SimError::Config("dt must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(SimError::Config("substeps must be at least 1".into()));
        }
        if self.platform_shape.iter().any(|s| !(*s > 0.0)) {
            return Err(SimError::Config("platform shape must be positive".into()));
        }
        Ok(())
    }

    pub fn substep_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

/// One robot on one platform, stepped at the control rate.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub model: Arc<RobotModel>,
    pub cfg: SimConfig,
    pub params: IntrinsicParams,
    pub trajectory: Arc<PlatformTrajectory>,
    pub platform: PlatformSim,
    pub robot: RobotState,
    pub time: f64,
    /// Force the robot exerts on the platform (logged only; the platform ignores it).
    pub platform_reaction: Vec3,
}

impl Simulation {
    /// Platform on its reference at t = 0; robot standing at the platform
    /// center with the given yaw relative to the platform, moving with it.
    pub fn new(
        model: Arc<RobotModel>,
        cfg: SimConfig,
        params: IntrinsicParams,
        trajectory: Arc<PlatformTrajectory>,
        gains: PlatformGains,
        yaw: f64,
    ) -> Self {
        let platform = PlatformSim::on_trajectory(&trajectory, cfg.platform_shape, gains, cfg.platform_kp_scale, cfg.platform_kd_scale);
        let frame = platform.frame();
        let position = frame.apply(&Vec3::new(0.0, 0.0, model.standing_height));
        let orientation = frame.rotation.compose(&Rotation::rot_z(yaw));
        let robot = RobotState::standing(
            &model,
            position,
            orientation,
            platform.point_velocity(&position),
            platform.angular_velocity(),
        );
        Self {
            model,
            cfg,
            params,
            trajectory,
            platform,
            robot,
            time: 0.0,
            platform_reaction: Vec3::zeros(),
        }
    }

    /// Advances one control period holding `q_target`.
    pub fn step(&mut self, q_target: &[f64; NUM_JOINTS]) -> Result<(), SimError> {
        let h = self.cfg.substep_dt();
        let v_start = self.robot.linear_velocity;
        let qd_start = self.robot.qd;
        let tau_prev = self.robot.tau;
        for k in 0..self.cfg.substeps {
            let t = self.time + k as f64 * h;
            let feet = self.robot.feet(&self.model);
            let mut anchors = self.robot.stick_anchors;
            let contact = contact_forces(&feet, &self.platform, &self.params, &self.cfg, &mut anchors);
            let tau = apply_pd_targets(&self.robot.q, &self.robot.qd, q_target, &self.params);
            let mut next = step_robot(&self.robot, &tau, &contact, &self.model, &self.params, &self.cfg, h)?;
            next.stick_anchors = anchors;
            self.robot = next;
            self.platform_reaction = -contact.forces.iter().sum::<Vec3>();
            self.platform = step_platform(&self.platform, &self.trajectory, t, h);
        }
        self.time += self.cfg.dt;
        let dt = self.cfg.dt;
        self.robot.linear_acceleration = (self.robot.linear_velocity - v_start) / dt;
        for j in 0..NUM_JOINTS {
            self.robot.qdd[j] = (self.robot.qd[j] - qd_start[j]) / dt;
        }
        self.robot.tau_prev = tau_prev;
        Ok(())
    }

    pub fn collision(&self) -> Option<CollisionKind> {
        collision_kind(&self.robot, &self.platform, &self.model)
    }
}
