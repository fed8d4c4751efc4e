use super::{alignment_command, build_explicit_params, ACTION_DIM};
use crate::simcore::{collision_kind, PlatformSim, RobotModel, RobotState, NUM_JOINTS, NUM_LEGS};
use crate::spatial::{planar_cross, Vec3};
use serde::{Deserialize, Serialize};

pub const NUM_REWARD_TERMS: usize = 12;

pub const REWARD_TERM_NAMES: [&str; NUM_REWARD_TERMS] = [
    "task_collision",
    "task_position",
    "task_alignment",
    "task_tilt",
    "task_height",
    "reg_rate",
    "reg_magnitude",
    "reg_power",
    "reg_contact_force",
    "reg_swing",
    "reg_stance",
    "reg_slip",
];

/// Reward coefficients and targets. `k0..k18` scale the terms in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardCoeffs {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub k7: f64,
    pub k8: f64,
    pub k9: f64,
    pub k10: f64,
    pub k11: f64,
    pub k12: f64,
    pub k13: f64,
    pub k14: f64,
    pub k15: f64,
    pub k16: f64,
    pub k17: f64,
    pub k18: f64,
    /// Desired base height above the platform (m).
    pub h_des: f64,
    /// Contact force tolerated without penalty (N).
    pub f_tol: f64,
    pub t_swing_des: f64,
    pub t_contact_des: f64,
    /// Use |t − t_des| in the swing and stance duration terms.
    pub abs_duration_terms: bool,
}

impl Default for RewardCoeffs {
    fn default() -> Self {
        Self::from_array(
            [10.0, 3.0, 1.2, 2.0, 0.3, 1.0, 0.2, 4.0, 0.1, 1e-7, 1e-4, 1e-4, 1e-7, 1e-6, 1e-5, 0.01, 2.0, 3.0, 0.05],
        )
    }
}

impl RewardCoeffs {
    pub fn from_array(k: [f64; 19]) -> Self {
        Self {
            k0: k[0],
            k1: k[1],
            k2: k[2],
            k3: k[3],
            k4: k[4],
            k5: k[5],
            k6: k[6],
            k7: k[7],
            k8: k[8],
            k9: k[9],
            k10: k[10],
            k11: k[11],
            k12: k[12],
            k13: k[13],
            k14: k[14],
            k15: k[15],
            k16: k[16],
            k17: k[17],
            k18: k[18],
            h_des: 0.37,
            f_tol: 50.0,
            t_swing_des: 0.1,
            t_contact_des: 0.5,
            abs_duration_terms: false,
        }
    }

    pub fn as_array(&self) -> [f64; 19] {
        [
            self.k0, self.k1, self.k2, self.k3, self.k4, self.k5, self.k6, self.k7, self.k8, self.k9, self.k10,
            self.k11, self.k12, self.k13, self.k14, self.k15, self.k16, self.k17, self.k18,
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(i) = self.as_array().iter().position(|k| !(*k >= 0.0)) {
            return Err(format!("k{i} must be non-negative"));
        }
        for (name, k) in [("k2", self.k2), ("k4", self.k4), ("k6", self.k6), ("k8", self.k8)] {
            if !(k > 0.0) {
                return Err(format!("{name} is a length scale and must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub task: [f64; 5],
    pub reg: [f64; 7],
    pub total: f64,
}

impl RewardBreakdown {
    pub fn from_terms(task: [f64; 5], reg: [f64; 7]) -> Self {
        let total = task.iter().sum::<f64>() + reg.iter().sum::<f64>();
        Self { task, reg, total }
    }

    /// Reward of a step that ended in a diverged simulation.
    pub fn collision_only(c: &RewardCoeffs) -> Self {
        Self::from_terms([-c.k0, 0.0, 0.0, 0.0, 0.0], [0.0; 7])
    }

    pub fn terms(&self) -> [f64; NUM_REWARD_TERMS] {
        let mut t = [0.0; NUM_REWARD_TERMS];
        t[..5].copy_from_slice(&self.task);
        t[5..].copy_from_slice(&self.reg);
        t
    }

    /// Checks the documented per-term bounds.
    pub fn check_bounds(&self, c: &RewardCoeffs) -> Result<(), String> {
        let t = &self.task;
        if !(t[0] == 0.0 || t[0] == -c.k0) {
            return Err(format!("task_collision = {}", t[0]));
        }
        for (i, k) in [(1, c.k1), (2, c.k3), (3, c.k5), (4, c.k7)] {
            if !(t[i] > 0.0 && t[i] <= k) {
                return Err(format!("{} = {} outside (0, {k}]", REWARD_TERM_NAMES[i], t[i]));
            }
        }
        for i in [0, 1, 2, 3, 6] {
            if !(self.reg[i] <= 0.0) {
                return Err(format!("{} = {} is positive", REWARD_TERM_NAMES[5 + i], self.reg[i]));
            }
        }
        let sum: f64 = self.terms().iter().sum();
        if (sum - self.total).abs() > 1e-12 * (1.0 + sum.abs()) {
            return Err(format!("total {} != sum {}", self.total, sum));
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// All twelve reward terms for the transition `prev → state` under `action`.
pub fn compute_reward(
    model: &RobotModel,
    state: &RobotState,
    prev: &RobotState,
    plat: &PlatformSim,
    action: &[f64; ACTION_DIM],
    prev_action: &[f64; ACTION_DIM],
    c: &RewardCoeffs,
) -> RewardBreakdown {
    let frame = plat.frame();
    let p_local = frame.apply_inverse(&state.position);

    let collided = collision_kind(state, plat, model).is_some();
    let x_exp = build_explicit_params(state, plat);
    let yaw_rate = state.orientation.apply_inverse(&state.angular_velocity).z;
    let u_aln = alignment_command(&x_exp, yaw_rate);
    let (roll, pitch) = state.orientation.tilt();

    let task = [
        if collided { -c.k0 } else { 0.0 },
        c.k1 * (-p_local.x.hypot(p_local.y) / c.k2).exp(),
        c.k3 * (-norm(&u_aln) / c.k4).exp(),
        c.k5 * (-roll.hypot(pitch) / c.k6).exp(),
        c.k7 * (-(p_local.z - c.h_des).abs() / c.k8).exp(),
    ];

    let reg0 = -(c.k9 * diff_norm(&state.tau, &prev.tau) + c.k10 * diff_norm(action, prev_action));
    let reg1 = -(c.k11 * norm(&state.tau) + c.k12 * norm(&state.qd) + c.k13 * norm(&state.qdd));
    let power: f64 = (0..NUM_JOINTS).map(|j| (state.tau[j] * state.qd[j]).max(0.0)).sum();
    let reg2 = -c.k14 * power;
    let reg3 = -c.k15 * state.foot_forces.iter().map(|f| (f.norm() - c.f_tol).max(0.0)).sum::<f64>();

    let duration = |t: f64, des: f64| if c.abs_duration_terms { (t - des).abs() } else { t - des };
    let mut swing = 0.0;
    let mut stance = 0.0;
    for leg in 0..NUM_LEGS {
        let (now, before) = (state.contacts[leg], prev.contacts[leg]);
        if now && !before {
            swing += duration(state.swing_time[leg], c.t_swing_des);
        }
        if !now && before {
            stance += duration(state.contact_time[leg], c.t_contact_des);
        }
    }
    let reg4 = -c.k16 * swing;
    let reg5 = -c.k17 * stance;

    let rot = &frame.rotation;
    let v_plf = rot.apply_inverse(&plat.linear_velocity());
    let w_plf_z = rot.apply_inverse(&plat.angular_velocity()).z;
    let feet = state.feet(model);
    let mut slip = 0.0;
    for leg in 0..NUM_LEGS {
        let p = frame.apply_inverse(&feet.positions[leg]);
        let v = rot.apply_inverse(&feet.velocities[leg]);
        let (cx, cy) = planar_cross(w_plf_z, (p.x, p.y));
        slip += Vec3::new(v.x - (cx + v_plf.x), v.y - (cy + v_plf.y), 0.0).norm();
    }
    let reg6 = -c.k18 * slip;

    RewardBreakdown::from_terms(task, [reg0, reg1, reg2, reg3, reg4, reg5, reg6])
}
