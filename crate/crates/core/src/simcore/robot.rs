//! Floating-base robot state and its integrator.
//!
//! All mass sits in the rigid base; legs are kinematic chains whose joints
//! carry a constant effective inertia. Contact forces act on the base at the
//! foot points and on the joints through the transposed foot Jacobians.
//! Rotation is integrated in angular-momentum form so torque-free motion
//! conserves momentum exactly.

use super::contact::ContactResult;
use super::model::{foot_kinematics, BasePose, FootStates, IntrinsicParams, RobotModel, NUM_JOINTS, NUM_LEGS};
use super::{SimConfig, SimError};
use crate::spatial::{skew, EulerXYZ, Rotation, Vec3};
use nalgebra::{Matrix3, SMatrix, SVector};
use std::ops::AddAssign;

/// Absolute value beyond which the simulation is considered diverged.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    /// Base (geometric center) position, world frame.
    pub position: Vec3,
    pub orientation: Rotation,
    pub linear_velocity: Vec3,
    /// Base acceleration averaged over the last control step.
    pub linear_acceleration: Vec3,
    /// World-frame angular velocity.
    pub angular_velocity: Vec3,
    pub q: [f64; NUM_JOINTS],
    pub qd: [f64; NUM_JOINTS],
    pub qdd: [f64; NUM_JOINTS],
    pub tau: [f64; NUM_JOINTS],
    pub tau_prev: [f64; NUM_JOINTS],
    pub contacts: [bool; NUM_LEGS],
    pub foot_forces: [Vec3; NUM_LEGS],
    /// Time since the last liftoff, frozen at touchdown.
    pub swing_time: [f64; NUM_LEGS],
    /// Time since the last touchdown, frozen at liftoff.
    pub contact_time: [f64; NUM_LEGS],
    /// Stick anchors in platform-frame xy.
    pub stick_anchors: [Option<[f64; 2]>; NUM_LEGS],
}

impl RobotState {
    /// Standing in the stance configuration with the given base pose and twist.
    pub fn standing(model: &RobotModel, position: Vec3, orientation: Rotation, linear_velocity: Vec3, angular_velocity: Vec3) -> Self {
        Self {
            position,
            orientation,
            linear_velocity,
            linear_acceleration: Vec3::zeros(),
            angular_velocity,
            q: model.q_stance,
            qd: [0.0; NUM_JOINTS],
            qdd: [0.0; NUM_JOINTS],
            tau: [0.0; NUM_JOINTS],
            tau_prev: [0.0; NUM_JOINTS],
            contacts: [false; NUM_LEGS],
            foot_forces: [Vec3::zeros(); NUM_LEGS],
            swing_time: [0.0; NUM_LEGS],
            contact_time: [0.0; NUM_LEGS],
            stick_anchors: [None; NUM_LEGS],
        }
    }

    pub fn base_pose(&self) -> BasePose {
        BasePose {
            position: self.position,
            orientation: self.orientation,
            linear_velocity: self.linear_velocity,
            angular_velocity: self.angular_velocity,
        }
    }

    pub fn feet(&self, model: &RobotModel) -> FootStates {
        foot_kinematics(model, &self.q, &self.qd, &self.base_pose())
    }

    /// Roll and pitch from the tilt, yaw from the heading; total for any orientation.
    pub fn euler(&self) -> EulerXYZ {
        let (roll, pitch) = self.orientation.tilt();
        EulerXYZ::new(roll, pitch, self.orientation.heading())
    }

    fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        let mut see = |x: f64| {
            m = if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY };
        };
        for v in [self.position, self.linear_velocity, self.angular_velocity] {
            v.iter().for_each(|x| see(*x));
        }
        self.q.iter().chain(self.qd.iter()).for_each(|x| see(*x));
        m
    }
}

/// One physics substep of length `dt` (semi-implicit Euler).
pub fn step_robot(
    state: &RobotState,
    tau: &[f64; NUM_JOINTS],
    contact: &ContactResult,
    model: &RobotModel,
    params: &IntrinsicParams,
    cfg: &SimConfig,
    dt: f64,
) -> Result<RobotState, SimError> {
    let feet = state.feet(model);
    let mass = params.total_mass(model);
    let r = state.orientation;
    let com_body = params.com_offset(model);
    let r_c = r.apply(&com_body);
    let p_com = state.position + r_c;
    let v_com = state.linear_velocity + state.angular_velocity.cross(&r_c);

    // Generalized velocity u = [v_com, ω, q̇]. The contact terms are treated
    // linearly-implicitly: (M + hD + h²K) Δu = hF − h²K (Gu − v_surface), with
    // D and K the contact damping and stiffness pulled back through the foot
    // Jacobians G.
    const N: usize = 6 + NUM_JOINTS;
    let mut force = Vec3::new(0.0, 0.0, -mass * cfg.gravity);
    let mut torque = Vec3::zeros();
    let inertia_body = model.body_inertia(mass);
    let inertia_world = |rot: &Rotation| rot.matrix() * inertia_body * rot.matrix().transpose();
    let i_w = inertia_world(&r);
    let rm = r.matrix();

    let mut a = SMatrix::<f64, N, N>::zeros();
    let mut rhs = SVector::<f64, N>::zeros();
    let mut u = SVector::<f64, N>::zeros();
    u.fixed_rows_mut::<3>(0).copy_from(&v_com);
    u.fixed_rows_mut::<3>(3).copy_from(&state.angular_velocity);
    for j in 0..NUM_JOINTS {
        u[6 + j] = state.qd[j];
        a[(6 + j, 6 + j)] = model.joint_inertia_of(j);
        rhs[6 + j] = tau[j];
    }
    for k in 0..3 {
        a[(k, k)] = mass;
    }
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&i_w);

    for leg in 0..NUM_LEGS {
        let f = contact.forces[leg];
        let arm = feet.positions[leg] - p_com;
        force += f;
        torque += arm.cross(&f);
        let joint = 6 + 3 * leg;
        let reaction = feet.jacobians[leg].transpose() * r.apply_inverse(&f);
        for k in 0..3 {
            rhs[joint + k] += reaction[k];
        }
        if !contact.contacts[leg] {
            continue;
        }
        let mut g = SMatrix::<f64, 3, N>::zeros();
        g.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        g.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&arm)));
        g.fixed_view_mut::<3, 3>(0, joint).copy_from(&(rm * feet.jacobians[leg]));
        let k = contact.stiffness[leg];
        let gt = g.transpose();
        a += gt * (contact.damping[leg] * g) * dt + gt * (k * g) * (dt * dt);
        rhs -= gt * (k * (g * u - contact.surface_velocity[leg])) * dt;
    }
    rhs.fixed_rows_mut::<3>(0).add_assign(&force);
    rhs.fixed_rows_mut::<3>(3).add_assign(&torque);
    let du = a.lu().solve(&(rhs * dt)).ok_or(SimError::Blowup)?;

    let v_com_next = v_com + du.fixed_rows::<3>(0);
    let p_com_next = p_com + v_com_next * dt;
    let omega_mid = state.angular_velocity + du.fixed_rows::<3>(3);
    let momentum = i_w * omega_mid;
    let r_next = Rotation::from_rotation_vector(&(omega_mid * dt)).compose(&r).orthonormalized();
    let omega_next = inertia_world(&r_next).try_inverse().expect("inertia is SPD") * momentum;

    let mut next = state.clone();
    for j in 0..NUM_JOINTS {
        next.qd[j] = state.qd[j] + du[6 + j];
        next.q[j] = state.q[j] + next.qd[j] * dt;
        if next.q[j] <= model.q_lower[j] {
            next.q[j] = model.q_lower[j];
            next.qd[j] = 0.0;
        } else if next.q[j] >= model.q_upper[j] {
            next.q[j] = model.q_upper[j];
            next.qd[j] = 0.0;
        }
    }

    let r_c_next = r_next.apply(&com_body);
    next.orientation = r_next;
    next.angular_velocity = omega_next;
    next.position = p_com_next - r_c_next;
    next.linear_velocity = v_com_next - omega_next.cross(&r_c_next);
    next.tau = *tau;
    next.foot_forces = contact.forces;

    for leg in 0..NUM_LEGS {
        let (was, is) = (state.contacts[leg], contact.contacts[leg]);
        if is {
            if !was {
                next.contact_time[leg] = 0.0;
            }
            next.contact_time[leg] += dt;
        } else {
            if was {
                next.swing_time[leg] = 0.0;
            }
            next.swing_time[leg] += dt;
        }
    }
    next.contacts = contact.contacts;

    if next.max_abs() > BLOWUP_LIMIT {
        return Err(SimError::Blowup);
    }
    Ok(next)
}

/// Total mechanical energy with the given contact potential (J).
pub fn mechanical_energy(state: &RobotState, model: &RobotModel, params: &IntrinsicParams, cfg: &SimConfig) -> f64 {
    let mass = params.total_mass(model);
    let r_c = state.orientation.apply(&params.com_offset(model));
    let v_com = state.linear_velocity + state.angular_velocity.cross(&r_c);
    let i_world = state.orientation.matrix() * model.body_inertia(mass) * state.orientation.matrix().transpose();
    let w = state.angular_velocity;
    let mut e = 0.5 * mass * v_com.norm_squared()
        + 0.5 * w.dot(&(i_world * w))
        + mass * cfg.gravity * (state.position + r_c).z;
    for j in 0..NUM_JOINTS {
        e += 0.5 * model.joint_inertia_of(j) * state.qd[j] * state.qd[j];
    }
    e
}
