use crate::env::{EpisodeConfig, RewardCoeffs};
use crate::nets::{Ablation, NetSpec};
use crate::simcore::SimConfig;
use crate::trajgen::TrajGenConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Control steps collected per environment per iteration.
    pub horizon: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 5,
            minibatches: 4,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.005,
            max_grad_norm: 1.0,
            horizon: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoaConfig {
    /// Weight pulling the encoder toward the implicit estimate.
    pub lambda: f64,
    /// Observation history length.
    pub history: usize,
    pub estimator_lr: f64,
}

impl Default for RoaConfig {
    fn default() -> Self {
        Self { lambda: 0.2, history: 20, estimator_lr: 3e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub start_level: usize,
    pub max_level: usize,
    pub window: usize,
    pub threshold: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self { start_level: 5, max_level: 15, window: 200, threshold: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub num_envs: usize,
    pub iterations: u64,
    pub seed: u64,
    /// Worker threads; 0 uses every core, 1 runs everything on the caller.
    pub threads: usize,
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { num_envs: 256, iterations: 4000, seed: 0, threads: 0, checkpoint_every: 100 }
    }
}

/// Network widths; the history length and ablation switches come from their own sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetsConfig {
    pub latent_dim: usize,
    pub actor_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub step_hidden: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub init_std: f64,
}

impl Default for NetsConfig {
    fn default() -> Self {
        let d = NetSpec::default();
        Self {
            latent_dim: d.latent_dim,
            actor_hidden: d.actor_hidden,
            encoder_hidden: d.encoder_hidden,
            critic_hidden: d.critic_hidden,
            step_hidden: d.step_hidden,
            conv_channels: d.conv_channels,
            conv_kernel: d.conv_kernel,
            conv_stride: d.conv_stride,
            init_std: d.init_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub sim: SimConfig,
    pub reward: RewardCoeffs,
    pub episode: EpisodeConfig,
    pub trajgen: TrajGenConfig,
    pub nets: NetsConfig,
    pub ppo: PpoConfig,
    pub roa: RoaConfig,
    pub curriculum: CurriculumConfig,
    pub ablation: Ablation,
    pub run: RunConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Small, fast settings used by tests and examples.
    pub fn smoke() -> Self {
        let mut cfg = Self::default();
        cfg.run.num_envs = 16;
        cfg.run.iterations = 50;
        cfg.run.checkpoint_every = 25;
        cfg
    }

    pub fn net_spec(&self) -> NetSpec {
        let n = &self.nets;
        NetSpec {
            history: self.roa.history,
            latent_dim: n.latent_dim,
            actor_hidden: n.actor_hidden.clone(),
            encoder_hidden: n.encoder_hidden.clone(),
            critic_hidden: n.critic_hidden.clone(),
            step_hidden: n.step_hidden,
            conv_channels: n.conv_channels,
            conv_kernel: n.conv_kernel,
            conv_stride: n.conv_stride,
            action_scale: self.episode.action_clamp,
            init_std: n.init_std,
            ablation: self.ablation,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.sim.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.reward.validate().map_err(ConfigError::Invalid)?;
        self.trajgen.validate().map_err(|e| ConfigError::Invalid(format!("trajgen: {e}")))?;
        self.net_spec().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.episode.history != self.roa.history {
            return invalid(format!("episode.history ({}) must equal roa.history ({})", self.episode.history, self.roa.history));
        }
        if !(self.episode.action_clamp > 0.0) {
            return invalid("episode.action_clamp must be positive".into());
        }
        let p = &self.ppo;
        if !(p.clip > 0.0) || p.epochs == 0 || p.minibatches == 0 || p.horizon == 0 {
            return invalid("ppo: clip must be positive; epochs, minibatches and horizon at least 1".into());
        }
        if !(0.0..=1.0).contains(&p.gamma) || !(0.0..=1.0).contains(&p.gae_lambda) {
            return invalid("ppo: gamma and gae_lambda must lie in [0, 1]".into());
        }
        if !(p.learning_rate > 0.0 && p.max_grad_norm > 0.0 && p.value_coef >= 0.0 && p.entropy_coef >= 0.0) {
            return invalid("ppo: learning_rate and max_grad_norm must be positive, coefficients non-negative".into());
        }
        if !(self.roa.lambda >= 0.0 && self.roa.estimator_lr > 0.0) {
            return invalid("roa: lambda must be non-negative and estimator_lr positive".into());
        }
        let c = &self.curriculum;
        if !self.trajgen.admits(c.start_level) || !self.trajgen.admits(c.max_level) || c.start_level > c.max_level {
            return invalid(format!("curriculum levels {}..{} outside the trajectory waypoint range", c.start_level, c.max_level));
        }
        if c.window == 0 || !(0.0..=1.0).contains(&c.threshold) {
            return invalid("curriculum: window must be positive and threshold in [0, 1]".into());
        }
        if self.run.num_envs == 0 || self.run.checkpoint_every == 0 {
            return invalid("run: num_envs and checkpoint_every must be positive".into());
        }
        if self.run.num_envs * p.horizon < p.minibatches {
            return invalid("run: fewer samples per iteration than minibatches".into());
        }
        Ok(())
    }
}
