use super::{EnvFactory, TrainConfig, TrainEnv, TrainError, Transition};
use crate::env::{sample_draw, BalanceEnv, EnvError, EpisodeConfig, RewardCoeffs, ACTION_DIM};
use crate::simcore::{IntrinsicRanges, PlatformGainRanges, RobotModel, SimConfig};
use crate::trajgen::{generate_one, TrajGenConfig};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Everything needed to start a randomized balancing episode.
#[derive(Debug, Clone)]
pub struct TaskFactory {
    pub model: Arc<RobotModel>,
    pub sim: SimConfig,
    pub reward: RewardCoeffs,
    pub episode: EpisodeConfig,
    pub trajgen: TrajGenConfig,
    pub intrinsics: IntrinsicRanges,
    pub gains: PlatformGainRanges,
}

impl TaskFactory {
    /// Training ranges from a config.
    pub fn training(cfg: &TrainConfig) -> Self {
        Self {
            model: Arc::new(RobotModel::default()),
            sim: cfg.sim.clone(),
            reward: cfg.reward.clone(),
            episode: cfg.episode.clone(),
            trajgen: cfg.trajgen.clone(),
            intrinsics: IntrinsicRanges::training(),
            gains: PlatformGainRanges::training(),
        }
    }
}

pub struct PlatformTask(pub BalanceEnv);

impl TrainEnv for PlatformTask {
    fn inputs(&self, obs: &mut [f64], hist: &mut [f64], x_exp: &mut [f64], x_imp: &mut [f64]) {
        obs.copy_from_slice(self.0.observation().as_slice());
        self.0.history().write_to(hist);
        x_exp.copy_from_slice(&self.0.explicit_params().0);
        x_imp.copy_from_slice(&self.0.implicit_params());
    }

    fn step(&mut self, action: &[f64; ACTION_DIM]) -> Result<Transition, EnvError> {
        let r = self.0.step(action)?;
        Ok(Transition {
            reward: r.reward.total,
            terms: r.reward.terms(),
            done: r.done,
            truncated: r.info.truncated,
            success: r.info.success,
        })
    }
}

impl EnvFactory for TaskFactory {
    type Env = PlatformTask;

    fn spawn(&self, level: usize, rng: &mut ChaCha8Rng) -> Result<PlatformTask, TrainError> {
        let traj = generate_one(&self.trajgen, level, rng)?;
        let draw = sample_draw(&self.intrinsics, &self.gains, rng);
        Ok(PlatformTask(BalanceEnv::reset(
            self.model.clone(),
            self.sim.clone(),
            self.reward.clone(),
            self.episode.clone(),
            Arc::new(traj),
            &draw,
        )))
    }

    fn history(&self) -> usize {
        self.episode.history
    }
}
