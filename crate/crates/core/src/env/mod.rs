//! The balancing task as a partially observed environment: observation and
//! privileged-parameter assembly, the alignment command, reward terms,
//! initial-state sampling and termination.

mod reward;

pub use reward::{compute_reward, RewardBreakdown, RewardCoeffs, NUM_REWARD_TERMS, REWARD_TERM_NAMES};

use crate::simcore::{
    CollisionKind, IntrinsicParams, IntrinsicRanges, PlatformGainRanges, PlatformGains, PlatformSim, RobotModel,
    RobotState, SimConfig, SimError, Simulation, INTRINSIC_DIM, NUM_JOINTS, NUM_LEGS,
};
use crate::spatial::Vec3;
use crate::trajgen::PlatformTrajectory;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

pub const OBS_DIM: usize = 44;
pub const EXP_DIM: usize = 13;
pub const ALN_DIM: usize = 3;
pub const IMP_DIM: usize = INTRINSIC_DIM;
pub const ACTION_DIM: usize = NUM_JOINTS;

/// Bumped whenever the observation layout changes.
pub const OBS_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// `[specific force (3), ω (3), roll/pitch (2), q (12), q̇ (12), a_prev (12)]`,
/// vectors in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub const SPECIFIC_FORCE: usize = 0;
    pub const ANGULAR_VELOCITY: usize = 3;
    pub const TILT: usize = 6;
    pub const Q: usize = 8;
    pub const QD: usize = 20;
    pub const PREV_ACTION: usize = 32;

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn yaw_rate(&self) -> f64 {
        self.0[Self::ANGULAR_VELOCITY + 2]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Version word followed by little-endian values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * OBS_DIM);
        out.extend_from_slice(&OBS_LAYOUT_VERSION.to_le_bytes());
        for v in &self.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvError> {
        if bytes.len() != 4 + 8 * OBS_DIM || bytes[..4] != OBS_LAYOUT_VERSION.to_le_bytes() {
            return Err(EnvError::Length { expected: 4 + 8 * OBS_DIM, got: bytes.len() });
        }
        let mut v = [0.0; OBS_DIM];
        for (i, chunk) in bytes[4..].chunks_exact(8).enumerate() {
            v[i] = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        }
        Ok(Self(v))
    }
}

pub fn build_observation(state: &RobotState, prev_action: &[f64; ACTION_DIM], gravity: f64) -> Observation {
    let r = &state.orientation;
    let specific_force = r.apply_inverse(&(state.linear_acceleration + Vec3::new(0.0, 0.0, gravity)));
    let omega = r.apply_inverse(&state.angular_velocity);
    let (roll, pitch) = r.tilt();
    let mut o = [0.0; OBS_DIM];
    o[0..3].copy_from_slice(specific_force.as_slice());
    o[3..6].copy_from_slice(omega.as_slice());
    o[6] = roll;
    o[7] = pitch;
    o[8..20].copy_from_slice(&state.q);
    o[20..32].copy_from_slice(&state.qd);
    o[32..44].copy_from_slice(prev_action);
    Observation(o)
}

/// `[contacts (4), v_body (3), v_platform (3), ω_platform (3)]` in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplicitParams(pub [f64; EXP_DIM]);

impl ExplicitParams {
    pub fn contacts(&self) -> &[f64] {
        &self.0[0..4]
    }
    pub fn body_velocity(&self) -> Vec3 {
        Vec3::new(self.0[4], self.0[5], self.0[6])
    }
    pub fn platform_velocity(&self) -> Vec3 {
        Vec3::new(self.0[7], self.0[8], self.0[9])
    }
    pub fn platform_angular_velocity(&self) -> Vec3 {
        Vec3::new(self.0[10], self.0[11], self.0[12])
    }
}

pub const EXP_NAMES: [&str; EXP_DIM] = [
    "c_fl", "c_fr", "c_rl", "c_rr", "v_body_x", "v_body_y", "v_body_z", "v_plf_x", "v_plf_y", "v_plf_z", "w_plf_x",
    "w_plf_y", "w_plf_z",
];

pub fn build_explicit_params(state: &RobotState, plat: &PlatformSim) -> ExplicitParams {
    let r = &state.orientation;
    let mut x = [0.0; EXP_DIM];
    for leg in 0..NUM_LEGS {
        x[leg] = if state.contacts[leg] { 1.0 } else { 0.0 };
    }
    x[4..7].copy_from_slice(r.apply_inverse(&state.linear_velocity).as_slice());
    x[7..10].copy_from_slice(r.apply_inverse(&plat.linear_velocity()).as_slice());
    x[10..13].copy_from_slice(r.apply_inverse(&plat.angular_velocity()).as_slice());
    ExplicitParams(x)
}

/// Platform-minus-body planar velocity and yaw rate. The yaw rate of the body
/// always comes from the measured observation.
pub fn alignment_command(x: &ExplicitParams, omega_body_z: f64) -> [f64; ALN_DIM] {
    [x.0[7] - x.0[4], x.0[8] - x.0[5], x.0[12] - omega_body_z]
}

/// Sliding window of the most recent observations, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsHistory {
    len: usize,
    buf: VecDeque<Observation>,
}

impl ObsHistory {
    /// Filled with `first`.
    pub fn new(len: usize, first: Observation) -> Self {
        Self { len, buf: std::iter::repeat_n(first, len).collect() }
    }

    pub fn push(&mut self, o: Observation) {
        if self.buf.len() == self.len {
            self.buf.pop_front();
        }
        self.buf.push_back(o);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Row-major `len × OBS_DIM`, oldest row first.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for o in &self.buf {
            out.extend_from_slice(&o.0);
        }
    }

    /// Same layout as [`ObsHistory::flatten`], into a slice of `len · OBS_DIM`.
    pub fn write_to(&self, out: &mut [f64]) {
        for (o, chunk) in self.buf.iter().zip(out.chunks_exact_mut(OBS_DIM)) {
            chunk.copy_from_slice(&o.0);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len * OBS_DIM);
        self.flatten_into(&mut v);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Symmetric bound on the joint displacement action (rad).
    pub action_clamp: f64,
    /// Observation history length fed to the estimators.
    pub history: usize,
    /// Height band around the desired height used by the metrics (m).
    pub height_tolerance: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { action_clamp: 0.6, history: 20, height_tolerance: 0.1 }
    }
}

/// Per-episode randomization draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDraw {
    pub intrinsics: IntrinsicParams,
    pub gains: PlatformGains,
    /// Base yaw relative to the platform.
    pub yaw: f64,
}

pub fn sample_intrinsics<R: Rng + ?Sized>(ranges: &IntrinsicRanges, rng: &mut R) -> IntrinsicParams {
    ranges.sample(rng)
}

/// Yaw uniform on (−π, π].
pub fn sample_yaw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    PI - 2.0 * PI * u
}

pub fn sample_draw<R: Rng + ?Sized>(intrinsics: &IntrinsicRanges, gains: &PlatformGainRanges, rng: &mut R) -> EpisodeDraw {
    EpisodeDraw { intrinsics: intrinsics.sample(rng), gains: gains.sample(rng), yaw: sample_yaw(rng) }
}

/// Ground truth handed to the learner after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub x_exp: ExplicitParams,
    pub u_aln: [f64; ALN_DIM],
    pub collision: Option<CollisionKind>,
    /// The episode reached its full duration without a collision.
    pub success: bool,
    /// The episode ended on the time limit rather than a collision.
    pub truncated: bool,
    /// `Σ_j max(τ_j q̇_j, 0)` (W).
    pub power: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

/// One robot on one platform trajectory.
#[derive(Debug, Clone)]
pub struct BalanceEnv {
    pub sim: Simulation,
    pub coeffs: RewardCoeffs,
    pub episode: EpisodeConfig,
    prev_action: [f64; ACTION_DIM],
    observation: Observation,
    history: ObsHistory,
    steps: usize,
    max_steps: usize,
    done: bool,
    initial_yaw: f64,
}

impl BalanceEnv {
    pub fn reset(
        model: Arc<RobotModel>,
        sim_cfg: SimConfig,
        coeffs: RewardCoeffs,
        episode: EpisodeConfig,
        trajectory: Arc<PlatformTrajectory>,
        draw: &EpisodeDraw,
    ) -> Self {
        let max_steps = (trajectory.duration() / sim_cfg.dt).round() as usize;
        let sim = Simulation::new(model, sim_cfg, draw.intrinsics.clone(), trajectory, draw.gains, draw.yaw);
        assert!(sim.collision().is_none(), "spawn pose collides");
        let prev_action = [0.0; ACTION_DIM];
        let observation = build_observation(&sim.robot, &prev_action, sim.cfg.gravity);
        let history = ObsHistory::new(episode.history, observation);
        let mut env = Self {
            sim,
            coeffs,
            episode,
            prev_action,
            observation,
            history,
            steps: 0,
            max_steps,
            done: false,
            initial_yaw: 0.0,
        };
        env.initial_yaw = env.yaw_in_platform();
        env
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    /// The observations preceding the current one, oldest first.
    pub fn history(&self) -> &ObsHistory {
        &self.history
    }

    pub fn explicit_params(&self) -> ExplicitParams {
        build_explicit_params(&self.sim.robot, &self.sim.platform)
    }

    /// Intrinsics mapped onto `[-1, 1]` by the training ranges.
    pub fn implicit_params(&self) -> [f64; IMP_DIM] {
        self.sim.params.normalized(&IntrinsicRanges::training())
    }

    pub fn alignment(&self) -> [f64; ALN_DIM] {
        alignment_command(&self.explicit_params(), self.observation.yaw_rate())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Base position in the platform frame.
    pub fn position_in_platform(&self) -> Vec3 {
        self.sim.platform.frame().apply_inverse(&self.sim.robot.position)
    }

    pub fn yaw_in_platform(&self) -> f64 {
        self.sim.platform.frame().rotation.transpose().compose(&self.sim.robot.orientation).heading()
    }

    /// Absolute yaw change relative to the platform since reset.
    pub fn rotation_deviation(&self) -> f64 {
        crate::spatial::wrap_angle(self.yaw_in_platform() - self.initial_yaw).abs()
    }

    pub fn height_violated(&self) -> bool {
        (self.position_in_platform().z - self.coeffs.h_des).abs() > self.episode.height_tolerance
    }

    pub fn clamp_action(&self, action: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        let c = self.episode.action_clamp;
        let mut a = [0.0; ACTION_DIM];
        for j in 0..ACTION_DIM {
            a[j] = if action[j].is_finite() { action[j].clamp(-c, c) } else { 0.0 };
        }
        a
    }

    pub fn step(&mut self, action: &[f64; ACTION_DIM]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let a = self.clamp_action(action);
        let mut q_target = self.sim.model.q_nominal;
        for j in 0..ACTION_DIM {
            q_target[j] += a[j];
        }
        let prev_state = self.sim.robot.clone();
        let prev_action = self.prev_action;
        self.history.push(self.observation);
        self.steps += 1;
        let outcome = self.sim.step(&q_target);
        self.prev_action = a;
        let (reward, collision) = match outcome {
            Ok(()) => {
                let r = compute_reward(
                    &self.sim.model,
                    &self.sim.robot,
                    &prev_state,
                    &self.sim.platform,
                    &a,
                    &prev_action,
                    &self.coeffs,
                );
                (r, self.sim.collision())
            }
            Err(SimError::Blowup) => (RewardBreakdown::collision_only(&self.coeffs), Some(CollisionKind::Blowup)),
            Err(e) => return Err(e.into()),
        };
        if collision == Some(CollisionKind::Blowup) {
            // Keep the last finite state so observations stay usable.
            self.sim.robot = prev_state;
        }
        self.observation = build_observation(&self.sim.robot, &self.prev_action, self.sim.cfg.gravity);
        let truncated = collision.is_none() && self.steps >= self.max_steps;
        self.done = collision.is_some() || truncated;
        let x_exp = self.explicit_params();
        let power = power_of(&self.sim.robot);
        Ok(StepResult {
            observation: self.observation,
            reward,
            done: self.done,
            info: StepInfo {
                u_aln: alignment_command(&x_exp, self.observation.yaw_rate()),
                x_exp,
                collision,
                success: truncated,
                truncated,
                power,
            },
        })
    }
}

/// Positive mechanical power summed over the joints (W).
pub fn power_of(state: &RobotState) -> f64 {
    state.tau.iter().zip(state.qd.iter()).map(|(t, v)| (t * v).max(0.0)).sum()
}
