//! Robot geometry, leg kinematics, intrinsic parameters and the joint PD law.

use crate::spatial::{Rotation, Vec3};
use crate::trajgen::Range;
use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;
/// Motor torque limit (N·m).
pub const TORQUE_LIMIT: f64 = 33.5;

/// Leg order used everywhere: front-left, front-right, rear-left, rear-right.
pub const LEG_NAMES: [&str; NUM_LEGS] = ["FL", "FR", "RL", "RR"];

/// Dimension of the intrinsic-parameter vector: mass, CoM (3), friction, Kp (12), Kd (12).
pub const INTRINSIC_DIM: usize = 29;

/// Joint stiffness and gravity the nominal setpoint is balanced for.
pub const STANCE_KP: f64 = 40.0;
pub const STANCE_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    /// Nominal total mass (kg).
    pub nominal_mass: f64,
    /// Nominal value of the randomized trunk mass (kg); the rest of the
    /// nominal mass is fixed structure.
    pub nominal_trunk_mass: f64,
    /// Half extents of the body box (m).
    pub body_half_extents: [f64; 3],
    /// Hip joint positions in the body frame, per leg.
    pub hip_offsets: [[f64; 3]; NUM_LEGS],
    /// Lateral offset from the abduction axis to the thigh (positive = left).
    pub abduction_offset: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    /// Base height above the feet in the standing stance (m).
    pub standing_height: f64,
    /// Joint angles with every foot directly below its hip at the standing height.
    pub q_stance: [f64; NUM_JOINTS],
    /// PD setpoint that holds `q_stance` under an even share of the nominal
    /// weight at the reference joint stiffness.
    pub q_nominal: [f64; NUM_JOINTS],
    pub q_lower: [f64; NUM_JOINTS],
    pub q_upper: [f64; NUM_JOINTS],
    /// Effective inertia of each joint type (abduction, hip, knee), kg·m².
    pub joint_inertia: [f64; 3],
}

impl Default for RobotModel {
    fn default() -> Self {
        Self::a1_like()
    }
}

impl RobotModel {
    /// A1-sized quadruped: 11.74 kg, 0.48 × 0.32 m body, 0.37 m standing height.
    pub fn a1_like() -> Self {
        let thigh = 0.22;
        let calf = 0.22;
        let height: f64 = 0.37;
        // Foot directly below the hip: l1 cos θ + l2 cos(θ + knee) = h with knee = -2θ.
        let hip = (height / (thigh + calf)).acos();
        let knee = -2.0 * hip;
        let mut q_stance = [0.0; NUM_JOINTS];
        let mut q_lower = [0.0; NUM_JOINTS];
        let mut q_upper = [0.0; NUM_JOINTS];
        for leg in 0..NUM_LEGS {
            q_stance[3 * leg..3 * leg + 3].copy_from_slice(&[0.0, hip, knee]);
            q_lower[3 * leg..3 * leg + 3].copy_from_slice(&[-0.8, -1.0, -2.6]);
            q_upper[3 * leg..3 * leg + 3].copy_from_slice(&[0.8, 2.2, -0.4]);
        }
        let mut m = Self {
            nominal_mass: 11.74,
            nominal_trunk_mass: 4.5,
            body_half_extents: [0.24, 0.16, 0.06],
            hip_offsets: [
                [0.183, 0.047, 0.0],
                [0.183, -0.047, 0.0],
                [-0.183, 0.047, 0.0],
                [-0.183, -0.047, 0.0],
            ],
            abduction_offset: 0.08,
            thigh_length: thigh,
            calf_length: calf,
            standing_height: height,
            q_stance,
            q_nominal: q_stance,
            q_lower,
            q_upper,
            joint_inertia: [0.05, 0.05, 0.05],
        };
        m.q_nominal = m.preloaded_setpoint(STANCE_KP, STANCE_GRAVITY);
        m
    }

    /// Setpoint `q` with `kp (q − q_stance) + Jᵀ f = 0` for a vertical foot
    /// force `f` carrying a quarter of the nominal weight.
    pub fn preloaded_setpoint(&self, kp: f64, gravity: f64) -> [f64; NUM_JOINTS] {
        let f = Vec3::new(0.0, 0.0, self.nominal_mass * gravity / NUM_LEGS as f64);
        let mut q = self.q_stance;
        for leg in 0..NUM_LEGS {
            let (_, jac) = self.leg_fk(leg, &self.q_stance[3 * leg..3 * leg + 3]);
            let tau = jac.transpose() * f;
            for k in 0..3 {
                q[3 * leg + k] -= tau[k] / kp;
            }
        }
        q
    }

    /// Mass that does not depend on the randomized trunk mass.
    pub fn structure_mass(&self) -> f64 {
        self.nominal_mass - self.nominal_trunk_mass
    }

    fn side(leg: usize) -> f64 {
        if leg.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Foot position in the body frame and its 3×3 Jacobian w.r.t. the leg's joints.
    pub fn leg_fk(&self, leg: usize, q: &[f64]) -> (Vec3, Matrix3<f64>) {
        let (q0, q1, q2) = (q[0], q[1], q[2]);
        let d = Self::side(leg) * self.abduction_offset;
        let (l1, l2) = (self.thigh_length, self.calf_length);
        let (s0, c0) = q0.sin_cos();
        let (s1, c1) = q1.sin_cos();
        let (s12, c12) = (q1 + q2).sin_cos();
        let x = -l1 * s1 - l2 * s12;
        let z = -l1 * c1 - l2 * c12;
        let h = self.hip_offsets[leg];
        let p = Vec3::new(h[0] + x, h[1] + d * c0 - z * s0, h[2] + d * s0 + z * c0);
        let dx1 = -l1 * c1 - l2 * c12;
        let dz1 = l1 * s1 + l2 * s12;
        let dx2 = -l2 * c12;
        let dz2 = l2 * s12;
        let jac = Matrix3::new(
            0.0,
            dx1,
            dx2,
            -d * s0 - z * c0,
            -dz1 * s0,
            -dz2 * s0,
            d * c0 - z * s0,
            dz1 * c0,
            dz2 * c0,
        );
        (p, jac)
    }

    /// Knee position in the body frame.
    pub fn knee_position(&self, leg: usize, q: &[f64]) -> Vec3 {
        let d = Self::side(leg) * self.abduction_offset;
        let (s0, c0) = q[0].sin_cos();
        let (s1, c1) = q[1].sin_cos();
        let x = -self.thigh_length * s1;
        let z = -self.thigh_length * c1;
        let h = self.hip_offsets[leg];
        Vec3::new(h[0] + x, h[1] + d * c0 - z * s0, h[2] + d * s0 + z * c0)
    }

    /// The eight body-box corners in the body frame.
    pub fn body_corners(&self) -> [Vec3; 8] {
        let [a, b, c] = self.body_half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (i, o) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { 1.0 } else { -1.0 };
            let sy = if i & 2 == 0 { 1.0 } else { -1.0 };
            let sz = if i & 4 == 0 { 1.0 } else { -1.0 };
            *o = Vec3::new(sx * a, sy * b, sz * c);
        }
        out
    }

    /// Body-frame inertia of a uniform box of the body's footprint (0.12 m thick).
    pub fn body_inertia(&self, mass: f64) -> Matrix3<f64> {
        let (l, w, h) = (
            2.0 * self.body_half_extents[0],
            2.0 * self.body_half_extents[1],
            2.0 * self.body_half_extents[2],
        );
        Matrix3::from_diagonal(&Vec3::new(
            mass * (w * w + h * h) / 12.0,
            mass * (l * l + h * h) / 12.0,
            mass * (l * l + w * w) / 12.0,
        ))
    }

    pub fn joint_inertia_of(&self, j: usize) -> f64 {
        self.joint_inertia[j % 3]
    }

    pub fn clamp_to_limits(&self, q: &mut [f64; NUM_JOINTS]) {
        for j in 0..NUM_JOINTS {
            q[j] = q[j].clamp(self.q_lower[j], self.q_upper[j]);
        }
    }
}

/// Per-foot world-frame kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootStates {
    pub positions: [Vec3; NUM_LEGS],
    pub velocities: [Vec3; NUM_LEGS],
    /// Body-frame Jacobians of each foot w.r.t. its three joints.
    pub jacobians: [Matrix3<f64>; NUM_LEGS],
}

/// Base pose and twist needed to place the feet in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePose {
    pub position: Vec3,
    pub orientation: Rotation,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

/// Forward kinematics of all four legs. Velocities include base motion.
pub fn foot_kinematics(
    model: &RobotModel,
    q: &[f64; NUM_JOINTS],
    qd: &[f64; NUM_JOINTS],
    base: &BasePose,
) -> FootStates {
    let mut positions = [Vec3::zeros(); NUM_LEGS];
    let mut velocities = [Vec3::zeros(); NUM_LEGS];
    let mut jacobians = [Matrix3::zeros(); NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let s = 3 * leg;
        let (p_body, jac) = model.leg_fk(leg, &q[s..s + 3]);
        let r = base.orientation.apply(&p_body);
        let joint_vel = jac * Vec3::new(qd[s], qd[s + 1], qd[s + 2]);
        positions[leg] = base.position + r;
        velocities[leg] =
            base.linear_velocity + base.angular_velocity.cross(&r) + base.orientation.apply(&joint_vel);
        jacobians[leg] = jac;
    }
    FootStates { positions, velocities, jacobians }
}

/// Randomized intrinsic properties of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicParams {
    /// Randomized trunk mass (kg), added to the fixed structure mass.
    pub body_mass: f64,
    /// Trunk CoM displacement in the body frame (m).
    pub com_shift: [f64; 3],
    pub friction: f64,
    pub kp: [f64; NUM_JOINTS],
    pub kd: [f64; NUM_JOINTS],
}

impl IntrinsicParams {
    pub fn nominal(model: &RobotModel) -> Self {
        Self {
            body_mass: model.nominal_trunk_mass,
            com_shift: [0.0; 3],
            friction: 1.0,
            kp: [40.0; NUM_JOINTS],
            kd: [1.0; NUM_JOINTS],
        }
    }

    pub fn total_mass(&self, model: &RobotModel) -> f64 {
        model.structure_mass() + self.body_mass
    }

    /// Whole-body CoM offset in the body frame: the trunk shift weighted by trunk mass.
    pub fn com_offset(&self, model: &RobotModel) -> Vec3 {
        Vec3::from(self.com_shift) * (self.body_mass / self.total_mass(model))
    }

    /// `[mass, com(3), friction, kp(12), kd(12)]`.
    pub fn to_vector(&self) -> [f64; INTRINSIC_DIM] {
        let mut v = [0.0; INTRINSIC_DIM];
        v[0] = self.body_mass;
        v[1..4].copy_from_slice(&self.com_shift);
        v[4] = self.friction;
        v[5..17].copy_from_slice(&self.kp);
        v[17..29].copy_from_slice(&self.kd);
        v
    }

    /// Vector affinely mapped so the given ranges land on `[-1, 1]`.
    pub fn normalized(&self, ranges: &IntrinsicRanges) -> [f64; INTRINSIC_DIM] {
        let raw = self.to_vector();
        let mut v = [0.0; INTRINSIC_DIM];
        for (i, x) in raw.iter().enumerate() {
            let r = ranges.range_of(i);
            let half = 0.5 * (r.hi - r.lo);
            let mid = 0.5 * (r.hi + r.lo);
            v[i] = if half > 0.0 { (x - mid) / half } else { 0.0 };
        }
        v
    }

    pub fn is_valid(&self) -> bool {
        self.friction > 0.0
            && self.body_mass > 0.0
            && self.kp.iter().all(|k| *k > 0.0)
            && self.kd.iter().all(|k| *k > 0.0)
    }
}

/// Sampling ranges for [`IntrinsicParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicRanges {
    pub body_mass: Range,
    pub com_shift: Range,
    pub friction: Range,
    pub kp: Range,
    pub kd: Range,
}

impl IntrinsicRanges {
    pub fn training() -> Self {
        Self {
            body_mass: Range::new(4.0, 5.0),
            com_shift: Range::new(-0.2, 0.2),
            friction: Range::new(0.8, 1.2),
            kp: Range::new(36.0, 44.0),
            kd: Range::new(0.8, 1.2),
        }
    }

    pub fn testing() -> Self {
        Self {
            body_mass: Range::new(3.5, 5.5),
            com_shift: Range::new(-0.25, 0.25),
            friction: Range::new(0.7, 1.3),
            kp: Range::new(32.0, 48.0),
            kd: Range::new(0.6, 1.4),
        }
    }

    fn range_of(&self, i: usize) -> Range {
        match i {
            0 => self.body_mass,
            1..=3 => self.com_shift,
            4 => self.friction,
            5..=16 => self.kp,
            _ => self.kd,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> IntrinsicParams {
        let body_mass = self.body_mass.sample(rng);
        let com_shift = [self.com_shift.sample(rng), self.com_shift.sample(rng), self.com_shift.sample(rng)];
        let friction = self.friction.sample(rng);
        let mut kp = [0.0; NUM_JOINTS];
        for k in kp.iter_mut() {
            *k = self.kp.sample(rng);
        }
        let mut kd = [0.0; NUM_JOINTS];
        for k in kd.iter_mut() {
            *k = self.kd.sample(rng);
        }
        IntrinsicParams { body_mass, com_shift, friction, kp, kd }
    }

    pub fn contains(&self, p: &IntrinsicParams) -> bool {
        p.to_vector().iter().enumerate().all(|(i, v)| self.range_of(i).contains(*v))
    }
}

/// `τ = Kp (q_target − q) − Kd q̇`, clamped to the motor limit.
pub fn apply_pd_targets(
    q: &[f64; NUM_JOINTS],
    qd: &[f64; NUM_JOINTS],
    q_target: &[f64; NUM_JOINTS],
    params: &IntrinsicParams,
) -> [f64; NUM_JOINTS] {
    let mut tau = [0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let raw = params.kp[j] * (q_target[j] - q[j]) - params.kd[j] * qd[j];
        tau[j] = raw.clamp(-TORQUE_LIMIT, TORQUE_LIMIT);
    }
    tau
}
