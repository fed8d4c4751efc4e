use super::{EnvFactory, TrainEnv, TrainError, Transition};
use crate::env::{EnvError, ACTION_DIM, NUM_REWARD_TERMS, OBS_DIM};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One-dimensional velocity matching: the first action component commands a
/// velocity that should equal a target drawn per episode. The target sits in
/// observation slot 0, the current velocity in slot 1.
#[derive(Debug, Clone)]
pub struct ToyEnv {
    target: f64,
    velocity: f64,
    steps: usize,
    max_steps: usize,
}

impl ToyEnv {
    pub fn target(&self) -> f64 {
        self.target
    }
}

impl TrainEnv for ToyEnv {
    fn inputs(&self, obs: &mut [f64], hist: &mut [f64], x_exp: &mut [f64], x_imp: &mut [f64]) {
        obs.fill(0.0);
        obs[0] = self.target;
        obs[1] = self.velocity;
        for chunk in hist.chunks_exact_mut(OBS_DIM) {
            chunk.copy_from_slice(obs);
        }
        x_exp.fill(0.0);
        x_imp.fill(0.0);
    }

    fn step(&mut self, action: &[f64; ACTION_DIM]) -> Result<Transition, EnvError> {
        if self.steps >= self.max_steps {
            return Err(EnvError::EpisodeDone);
        }
        self.velocity = if action[0].is_finite() { action[0] } else { 0.0 };
        self.steps += 1;
        let err = self.velocity - self.target;
        let reward = (-err * err / 0.05).exp();
        let done = self.steps >= self.max_steps;
        let mut terms = [0.0; NUM_REWARD_TERMS];
        terms[1] = reward;
        Ok(Transition { reward, terms, done, truncated: done, success: done })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ToyFactory {
    pub history: usize,
    pub episode_steps: usize,
}

impl Default for ToyFactory {
    fn default() -> Self {
        Self { history: 20, episode_steps: 16 }
    }
}

impl EnvFactory for ToyFactory {
    type Env = ToyEnv;

    fn spawn(&self, _level: usize, rng: &mut ChaCha8Rng) -> Result<ToyEnv, TrainError> {
        Ok(ToyEnv { target: rng.gen_range(-0.5..0.5), velocity: 0.0, steps: 0, max_steps: self.episode_steps })
    }

    fn history(&self) -> usize {
        self.history
    }
}
