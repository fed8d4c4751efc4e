use super::{compute_gae, EpisodeOutcome, TrainError};
use crate::env::{EnvError, ACTION_DIM, EXP_DIM, IMP_DIM, NUM_REWARD_TERMS, OBS_DIM};
use crate::nets::{gaussian_log_prob, sample_action, Mat, Networks, Tape};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use rayon::ThreadPool;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub terms: [f64; NUM_REWARD_TERMS],
    pub done: bool,
    /// Ended on the time limit; the value of the final state is bootstrapped.
    pub truncated: bool,
    pub success: bool,
}

/// An environment the learner can drive.
pub trait TrainEnv: Send {
    /// Writes the current observation, its history (oldest first) and the
    /// privileged ground truth.
    fn inputs(&self, obs: &mut [f64], hist: &mut [f64], x_exp: &mut [f64], x_imp: &mut [f64]);
    fn step(&mut self, action: &[f64; ACTION_DIM]) -> Result<Transition, EnvError>;
}

/// Builds fresh episodes at a curriculum level.
pub trait EnvFactory: Sync {
    type Env: TrainEnv;
    fn spawn(&self, level: usize, rng: &mut ChaCha8Rng) -> Result<Self::Env, TrainError>;
    fn history(&self) -> usize;
}

struct Slot<E> {
    env: E,
    rng: ChaCha8Rng,
    level: usize,
    episode_return: f64,
    length: usize,
}

/// Critic inputs of a state that ended on the time limit.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalInputs {
    pub obs: Vec<f64>,
    pub x_exp: Vec<f64>,
    pub x_imp: Vec<f64>,
}

struct SlotStep {
    transition: Transition,
    terminal: Option<TerminalInputs>,
    outcome: Option<EpisodeOutcome>,
}

/// Independent environments with per-environment random streams, so results
/// do not depend on how many threads step them.
pub struct VecEnv<F: EnvFactory> {
    factory: F,
    slots: Vec<Slot<F::Env>>,
}

impl<F: EnvFactory> VecEnv<F> {
    pub fn new(factory: F, n: usize, seed: u64, level: usize) -> Result<Self, TrainError> {
        let mut slots = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let env = factory.spawn(level, &mut rng)?;
            slots.push(Slot { env, rng, level, episode_return: 0.0, length: 0 });
        }
        Ok(Self { factory, slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn history(&self) -> usize {
        self.factory.history()
    }

    pub fn factory(&self) -> &F {
        &self.factory
    }

    /// Writes every environment's inputs into rows `row0..row0 + len()`.
    pub fn gather(&self, row0: usize, obs: &mut Mat, hist: &mut Mat, x_exp: &mut Mat, x_imp: &mut Mat) {
        for (e, s) in self.slots.iter().enumerate() {
            let r = row0 + e;
            s.env.inputs(obs.row_mut(r), hist.row_mut(r), x_exp.row_mut(r), x_imp.row_mut(r));
        }
    }

    /// Steps every environment once; finished episodes restart at `level`.
    pub fn step(
        &mut self,
        actions: &Mat,
        level: usize,
        pool: Option<&ThreadPool>,
    ) -> Result<(Vec<Transition>, Vec<Option<TerminalInputs>>, Vec<EpisodeOutcome>), TrainError> {
        let factory = &self.factory;
        let hist_len = factory.history() * OBS_DIM;
        let step_one = |(e, slot): (usize, &mut Slot<F::Env>)| -> Result<SlotStep, TrainError> {
            let mut a = [0.0; ACTION_DIM];
            a.copy_from_slice(actions.row(e));
            let tr = slot.env.step(&a)?;
            slot.episode_return += tr.reward;
            slot.length += 1;
            let mut terminal = None;
            let mut outcome = None;
            if tr.done {
                if tr.truncated {
                    let mut t = TerminalInputs { obs: vec![0.0; OBS_DIM], x_exp: vec![0.0; EXP_DIM], x_imp: vec![0.0; IMP_DIM] };
                    let mut h = vec![0.0; hist_len];
                    slot.env.inputs(&mut t.obs, &mut h, &mut t.x_exp, &mut t.x_imp);
                    terminal = Some(t);
                }
                outcome = Some(EpisodeOutcome {
                    success: tr.success,
                    level: slot.level,
                    episode_return: slot.episode_return,
                    length: slot.length,
                });
                slot.env = factory.spawn(level, &mut slot.rng)?;
                slot.level = level;
                slot.episode_return = 0.0;
                slot.length = 0;
            }
            Ok(SlotStep { transition: tr, terminal, outcome })
        };
        let results: Vec<SlotStep> = match pool {
            Some(p) => p.install(|| self.slots.par_iter_mut().enumerate().map(step_one).collect::<Result<_, _>>())?,
            None => self.slots.iter_mut().enumerate().map(step_one).collect::<Result<_, _>>()?,
        };
        let mut transitions = Vec::with_capacity(results.len());
        let mut terminals = Vec::with_capacity(results.len());
        let mut outcomes = Vec::new();
        for r in results {
            transitions.push(r.transition);
            terminals.push(r.terminal);
            outcomes.extend(r.outcome);
        }
        Ok((transitions, terminals, outcomes))
    }
}

/// One iteration of experience, time-major (`row = t · n_envs + e`).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub obs: Mat,
    pub hist: Mat,
    pub x_exp: Mat,
    pub x_imp: Mat,
    pub actions: Mat,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Rewards including the bootstrapped value of time-limit endings.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub last_values: Vec<f64>,
    /// Per-term reward sums over the buffer.
    pub term_sums: [f64; NUM_REWARD_TERMS],
    /// Sum of environment rewards, without bootstrap.
    pub env_reward_sum: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, horizon: usize, history: usize) -> Self {
        let rows = n_envs * horizon;
        Self {
            n_envs,
            horizon,
            obs: Mat::zeros(rows, OBS_DIM),
            hist: Mat::zeros(rows, history * OBS_DIM),
            x_exp: Mat::zeros(rows, EXP_DIM),
            x_imp: Mat::zeros(rows, IMP_DIM),
            actions: Mat::zeros(rows, ACTION_DIM),
            log_probs: vec![0.0; rows],
            values: vec![0.0; rows],
            rewards: vec![0.0; rows],
            dones: vec![false; rows],
            last_values: vec![0.0; n_envs],
            term_sums: [0.0; NUM_REWARD_TERMS],
            env_reward_sum: 0.0,
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Recomputes advantages and returns (advantages left unnormalized).
    pub fn finish(&mut self, gamma: f64, lambda: f64) {
        let (a, r) = compute_gae(&self.rewards, &self.values, &self.dones, &self.last_values, gamma, lambda);
        self.advantages = a;
        self.returns = r;
    }
}

fn critic_values(nets: &Networks, obs: &Mat, x_exp: &Mat, x_imp: &Mat) -> Result<Vec<f64>, TrainError> {
    let mut t = Tape::new(&nets.store);
    let v = nets.value(&mut t, obs, x_exp, x_imp)?;
    Ok(t.value(v).data.clone())
}

fn rows(m: &Mat, r0: usize, n: usize) -> Mat {
    Mat { rows: n, cols: m.cols, data: m.data[r0 * m.cols..(r0 + n) * m.cols].to_vec() }
}

/// Runs `horizon` steps of every environment with actions sampled from the
/// training policy (ground-truth explicit parameters, encoder latent).
pub fn collect_rollouts<F: EnvFactory>(
    nets: &Networks,
    envs: &mut VecEnv<F>,
    horizon: usize,
    level: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
    pool: Option<&ThreadPool>,
) -> Result<(RolloutBuffer, Vec<EpisodeOutcome>), TrainError> {
    let n = envs.len();
    let mut buf = RolloutBuffer::new(n, horizon, envs.history());
    let mut outcomes = Vec::new();
    let log_std = nets.log_std().to_vec();
    for t in 0..horizon {
        let r0 = t * n;
        envs.gather(r0, &mut buf.obs, &mut buf.hist, &mut buf.x_exp, &mut buf.x_imp);
        let (obs, hist, x_exp, x_imp) =
            (rows(&buf.obs, r0, n), rows(&buf.hist, r0, n), rows(&buf.x_exp, r0, n), rows(&buf.x_imp, r0, n));
        let (mean, values) = {
            let mut tape = Tape::new(&nets.store);
            let xi = tape.input(x_imp.clone());
            let l = nets.encode(&mut tape, xi)?;
            let input = nets.actor_input(&mut tape, &obs, &x_exp, l, &hist)?;
            let mean = nets.actor_mean(&mut tape, input)?;
            let v = nets.value(&mut tape, &obs, &x_exp, &x_imp)?;
            (tape.value(mean).clone(), tape.value(v).data.clone())
        };
        let mut actions = Mat::zeros(n, ACTION_DIM);
        for e in 0..n {
            let a = sample_action(mean.row(e), &log_std, rng);
            buf.log_probs[r0 + e] = gaussian_log_prob(mean.row(e), &log_std, &a);
            actions.row_mut(e).copy_from_slice(&a);
            buf.values[r0 + e] = values[e];
        }
        buf.actions.data[r0 * ACTION_DIM..(r0 + n) * ACTION_DIM].copy_from_slice(&actions.data);
        let (transitions, terminals, done) = envs.step(&actions, level, pool)?;
        outcomes.extend(done);
        for (e, tr) in transitions.iter().enumerate() {
            buf.rewards[r0 + e] = tr.reward;
            buf.dones[r0 + e] = tr.done;
            buf.env_reward_sum += tr.reward;
            for (s, v) in buf.term_sums.iter_mut().zip(&tr.terms) {
                *s += v;
            }
        }
        let idx: Vec<usize> = (0..n).filter(|e| terminals[*e].is_some()).collect();
        if !idx.is_empty() {
            let pick = |f: fn(&TerminalInputs) -> &Vec<f64>| {
                let rows: Vec<&Vec<f64>> = idx.iter().map(|e| f(terminals[*e].as_ref().unwrap())).collect();
                Mat::from_rows(&rows).expect("equal widths")
            };
            let v = critic_values(nets, &pick(|t| &t.obs), &pick(|t| &t.x_exp), &pick(|t| &t.x_imp))?;
            for (k, e) in idx.iter().enumerate() {
                buf.rewards[r0 + e] += gamma * v[k];
            }
        }
    }
    let mut obs = Mat::zeros(n, OBS_DIM);
    let mut hist = Mat::zeros(n, envs.history() * OBS_DIM);
    let mut x_exp = Mat::zeros(n, EXP_DIM);
    let mut x_imp = Mat::zeros(n, IMP_DIM);
    envs.gather(0, &mut obs, &mut hist, &mut x_exp, &mut x_imp);
    buf.last_values = critic_values(nets, &obs, &x_exp, &x_imp)?;
    Ok((buf, outcomes))
}
