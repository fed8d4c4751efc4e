use super::{
    collect_rollouts, ppo_update, CurriculumState, EnvFactory, EpisodeOutcome, TaskFactory, TrainConfig, TrainError,
    UpdateStats, VecEnv,
};
use crate::env::{NUM_REWARD_TERMS, REWARD_TERM_NAMES};
use crate::nets::{load_checkpoint, save_checkpoint, Adam, Checkpoint, Networks};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_LATEST: &str = "checkpoint_latest.bin";
const CHECKPOINT_DIVERGED: &str = "checkpoint_diverged.bin";

/// Columns of the metrics log, before the per-term reward means (`r_<term>`).
pub const METRICS_COLUMNS: [&str; 17] = [
    "iteration",
    "level",
    "env_steps",
    "episodes",
    "success_rate",
    "mean_episode_return",
    "mean_episode_length",
    "mean_step_reward",
    "policy_loss",
    "value_loss",
    "entropy",
    "regularizer",
    "explicit_loss",
    "implicit_loss",
    "grad_norm",
    "approx_kl",
    "clip_fraction",
];

pub fn metrics_header() -> String {
    let mut h = METRICS_COLUMNS.join(",");
    for name in REWARD_TERM_NAMES {
        let _ = write!(h, ",r_{name}");
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: u64,
    /// Level in force while the data was collected.
    pub level: usize,
    pub env_steps: u64,
    pub episodes: usize,
    /// Rolling curriculum window after this iteration.
    pub success_rate: f64,
    pub mean_episode_return: f64,
    pub mean_episode_length: f64,
    pub mean_step_reward: f64,
    pub update: UpdateStats,
    pub term_means: [f64; NUM_REWARD_TERMS],
}

impl IterationStats {
    pub fn csv_row(&self) -> String {
        let u = &self.update;
        let mut row = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.level,
            self.env_steps,
            self.episodes,
            self.success_rate,
            self.mean_episode_return,
            self.mean_episode_length,
            self.mean_step_reward,
            u.policy_loss,
            u.value_loss,
            u.entropy,
            u.regularizer,
            u.explicit_loss,
            u.implicit_loss,
            u.grad_norm,
            u.approx_kl,
            u.clip_fraction
        );
        for v in self.term_means {
            let _ = write!(row, ",{v}");
        }
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainerMeta {
    iteration: u64,
    env_steps: u64,
    curriculum: CurriculumState,
    level_windows: BTreeMap<usize, VecDeque<bool>>,
    config: TrainConfig,
}

fn derived_seed(seed: u64, iteration: u64) -> u64 {
    seed ^ iteration.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Owns the networks, optimizers, environments and curriculum of one run.
pub struct Trainer<F: EnvFactory> {
    pub cfg: TrainConfig,
    pub nets: Networks,
    pub policy_opt: Adam,
    pub estimator_opt: Adam,
    pub curriculum: CurriculumState,
    pub iteration: u64,
    pub env_steps: u64,
    /// Rolling outcomes (curriculum window length) of every level visited.
    pub level_windows: BTreeMap<usize, VecDeque<bool>>,
    envs: VecEnv<F>,
    pool: Option<ThreadPool>,
}

fn build_pool(threads: usize) -> Result<Option<ThreadPool>, TrainError> {
    if threads == 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| TrainError::Resume(format!("thread pool: {e}")))
}

impl<F: EnvFactory> Trainer<F> {
    pub fn new(cfg: TrainConfig, factory: F) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
        let nets = Networks::new(cfg.net_spec(), &mut rng)?;
        let policy_opt = Adam::new(cfg.ppo.learning_rate, &nets.store);
        let estimator_opt = Adam::new(cfg.roa.estimator_lr, &nets.store);
        let curriculum = CurriculumState::new(&cfg.curriculum);
        Self::assemble(cfg, factory, nets, policy_opt, estimator_opt, curriculum, 0, 0, BTreeMap::new())
    }

    /// Continues a run from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(cfg: TrainConfig, factory: F, ck: Checkpoint) -> Result<Self, TrainError> {
        cfg.validate()?;
        let meta: TrainerMeta =
            serde_json::from_value(ck.meta.clone()).map_err(|e| TrainError::Resume(format!("checkpoint metadata: {e}")))?;
        if ck.spec != cfg.net_spec() {
            return Err(TrainError::Resume("checkpoint network spec differs from the config".into()));
        }
        let nets = Networks::from_store(ck.spec, ck.params)?;
        let policy_opt = Adam::import("opt.policy", &nets.store, &ck.extra)?;
        let estimator_opt = Adam::import("opt.estimator", &nets.store, &ck.extra)?;
        Self::assemble(
            cfg,
            factory,
            nets,
            policy_opt,
            estimator_opt,
            meta.curriculum,
            meta.iteration,
            meta.env_steps,
            meta.level_windows,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        cfg: TrainConfig,
        factory: F,
        nets: Networks,
        policy_opt: Adam,
        estimator_opt: Adam,
        curriculum: CurriculumState,
        iteration: u64,
        env_steps: u64,
        level_windows: BTreeMap<usize, VecDeque<bool>>,
    ) -> Result<Self, TrainError> {
        if factory.history() != nets.spec.history {
            return Err(TrainError::Resume(format!(
                "environment history {} differs from network history {}",
                factory.history(),
                nets.spec.history
            )));
        }
        let envs = VecEnv::new(factory, cfg.run.num_envs, derived_seed(cfg.run.seed, iteration), curriculum.level)?;
        let pool = build_pool(cfg.run.threads)?;
        Ok(Self { cfg, nets, policy_opt, estimator_opt, curriculum, iteration, env_steps, level_windows, envs, pool })
    }

    pub fn envs(&self) -> &VecEnv<F> {
        &self.envs
    }

    /// Rolling success rate at `level` over the last curriculum-window episodes.
    pub fn level_success_rate(&self, level: usize) -> Option<f64> {
        self.level_windows
            .get(&level)
            .filter(|w| !w.is_empty())
            .map(|w| w.iter().filter(|s| **s).count() as f64 / w.len() as f64)
    }

    fn record(&mut self, outcomes: &[EpisodeOutcome]) {
        let cap = self.cfg.curriculum.window;
        for o in outcomes {
            let w = self.level_windows.entry(o.level).or_default();
            if w.len() == cap {
                w.pop_front();
            }
            w.push_back(o.success);
        }
    }

    /// Collect, update, advance the curriculum.
    pub fn iterate(&mut self) -> Result<IterationStats, TrainError> {
        let level = self.curriculum.level;
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(self.cfg.run.seed, self.iteration));
        rng.set_stream(1);
        let (mut buf, outcomes) = collect_rollouts(
            &self.nets,
            &mut self.envs,
            self.cfg.ppo.horizon,
            level,
            self.cfg.ppo.gamma,
            &mut rng,
            self.pool.as_ref(),
        )?;
        buf.finish(self.cfg.ppo.gamma, self.cfg.ppo.gae_lambda);
        let update = ppo_update(
            &mut self.nets,
            &mut self.policy_opt,
            &mut self.estimator_opt,
            &buf,
            &self.cfg.ppo,
            &self.cfg.roa,
            &mut rng,
        )
        .map_err(|e| match e {
            TrainError::Divergence { what, checkpoint, .. } => {
                TrainError::Divergence { iteration: self.iteration + 1, what, checkpoint }
            }
            e => e,
        })?;
        self.iteration += 1;
        let steps = buf.len();
        self.env_steps += steps as u64;
        self.record(&outcomes);
        self.curriculum.tick(&outcomes);
        let n_ep = outcomes.len();
        let mean = |f: fn(&EpisodeOutcome) -> f64| {
            if n_ep == 0 {
                f64::NAN
            } else {
                outcomes.iter().map(f).sum::<f64>() / n_ep as f64
            }
        };
        let mut term_means = buf.term_sums;
        for v in term_means.iter_mut() {
            *v /= steps as f64;
        }
        Ok(IterationStats {
            iteration: self.iteration,
            level,
            env_steps: self.env_steps,
            episodes: n_ep,
            success_rate: self.curriculum.success_rate(),
            mean_episode_return: mean(|o| o.episode_return),
            mean_episode_length: mean(|o| o.length as f64),
            mean_step_reward: buf.env_reward_sum / steps as f64,
            update,
            term_means,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = TrainerMeta {
            iteration: self.iteration,
            env_steps: self.env_steps,
            curriculum: self.curriculum.clone(),
            level_windows: self.level_windows.clone(),
            config: self.cfg.clone(),
        };
        let mut extra = self.policy_opt.export("opt.policy", &self.nets.store);
        extra.extend(self.estimator_opt.export("opt.estimator", &self.nets.store));
        Checkpoint {
            spec: self.nets.spec.clone(),
            params: self.nets.store.clone(),
            extra,
            meta: serde_json::to_value(meta).expect("metadata serializes"),
        }
    }
}

/// Training config stored in a checkpoint written by the trainer.
pub fn checkpoint_config(ck: &Checkpoint) -> Option<TrainConfig> {
    ck.meta.get("config").and_then(|c| serde_json::from_value(c.clone()).ok())
}

/// Curriculum level stored in a trainer checkpoint.
pub fn checkpoint_level(ck: &Checkpoint) -> Option<usize> {
    ck.meta.get("curriculum")?.get("level")?.as_u64().map(|l| l as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub iterations: u64,
    pub checkpoint: PathBuf,
    pub level: usize,
    /// Stats of the iterations run by this call.
    pub history: Vec<IterationStats>,
    /// Rolling success rate per visited level.
    pub level_success: BTreeMap<usize, f64>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

fn save(ck: &Checkpoint, path: &Path) -> Result<(), TrainError> {
    save_checkpoint(ck, path).map_err(|e| match e {
        crate::nets::NetError::Io(source) => TrainError::Io { path: path.to_path_buf(), source },
        e => e.into(),
    })
}

/// Runs the platform task to `cfg.run.iterations`, writing `metrics.csv` and
/// checkpoints into `out`. With `resume`, continues from that checkpoint and
/// appends to the existing log.
pub fn train(cfg: TrainConfig, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    let factory = TaskFactory::training(&cfg);
    train_with(cfg, factory, out, resume)
}

/// [`train`] for any environment factory.
pub fn train_with<F: EnvFactory>(cfg: TrainConfig, factory: F, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    train_observed(cfg, factory, out, resume, &mut |_| {})
}

/// [`train_with`], reporting every finished iteration to `progress`.
pub fn train_observed<F: EnvFactory>(
    cfg: TrainConfig,
    factory: F,
    out: &Path,
    resume: Option<&Path>,
    progress: &mut dyn FnMut(&IterationStats),
) -> Result<TrainOutcome, TrainError> {
    std::fs::create_dir_all(out).map_err(io(out))?;
    let mut trainer = match resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            Trainer::resume(cfg, factory, ck)?
        }
        None => Trainer::new(cfg, factory)?,
    };
    let metrics_path = out.join(METRICS_FILE);
    let fresh = resume.is_none() || !metrics_path.exists();
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&metrics_path)
        .map_err(io(&metrics_path))?;
    if fresh {
        writeln!(log, "{}", metrics_header()).map_err(io(&metrics_path))?;
    }
    let latest = out.join(CHECKPOINT_LATEST);
    let mut history = Vec::new();
    while trainer.iteration < trainer.cfg.run.iterations {
        let stats = match trainer.iterate() {
            Ok(s) => s,
            Err(TrainError::Divergence { iteration, what, .. }) => {
                let dump = out.join(CHECKPOINT_DIVERGED);
                save(&trainer.checkpoint(), &dump)?;
                return Err(TrainError::Divergence { iteration, what, checkpoint: Some(dump) });
            }
            Err(e) => return Err(e),
        };
        writeln!(log, "{}", stats.csv_row()).map_err(io(&metrics_path))?;
        progress(&stats);
        let it = trainer.iteration;
        if it % trainer.cfg.run.checkpoint_every == 0 || it == trainer.cfg.run.iterations {
            log.flush().map_err(io(&metrics_path))?;
            let ck = trainer.checkpoint();
            save(&ck, &out.join(format!("checkpoint_{it:06}.bin")))?;
            save(&ck, &latest)?;
        }
        history.push(stats);
    }
    log.flush().map_err(io(&metrics_path))?;
    if !latest.exists() {
        save(&trainer.checkpoint(), &latest)?;
    }
    let level_success = trainer.level_windows.keys().filter_map(|l| trainer.level_success_rate(*l).map(|r| (*l, r))).collect();
    Ok(TrainOutcome { iterations: trainer.iteration, checkpoint: latest, level: trainer.curriculum.level, history, level_success })
}
