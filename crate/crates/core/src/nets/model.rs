use super::{Mat, NetError, ParamStore, Tape, Var};
use crate::env::{ACTION_DIM, ALN_DIM, EXP_DIM, IMP_DIM, OBS_DIM};
use crate::env::Observation;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.8378770664093453;

/// Network-side ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Drop the alignment command from the actor input.
    pub no_ac: bool,
    /// Keep only contacts and body velocity from the explicit estimate.
    pub no_ee_platform: bool,
    /// No explicit estimator at all.
    pub no_ee: bool,
    /// Also feed the flattened observation history to the actor.
    pub history_obs: bool,
}

impl Ablation {
    pub fn validate(&self) -> Result<(), NetError> {
        if (self.no_ee || self.no_ee_platform) && !self.no_ac {
            return Err(NetError::Spec("the alignment command needs platform velocity estimates; set no_ac".into()));
        }
        Ok(())
    }

    /// Number of explicit-estimate columns the actor sees.
    pub fn exp_cols(&self) -> usize {
        if self.no_ee {
            0
        } else if self.no_ee_platform {
            7
        } else {
            EXP_DIM
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSpec {
    pub history: usize,
    pub latent_dim: usize,
    pub actor_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub step_hidden: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub action_scale: f64,
    pub init_std: f64,
    pub ablation: Ablation,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            history: 20,
            latent_dim: 8,
            actor_hidden: vec![512, 256, 128, 64],
            encoder_hidden: vec![64],
            critic_hidden: vec![256, 128, 64],
            step_hidden: 32,
            conv_channels: 32,
            conv_kernel: 5,
            conv_stride: 2,
            action_scale: 0.6,
            init_std: 0.25,
            ablation: Ablation::default(),
        }
    }
}

impl NetSpec {
    pub fn validate(&self) -> Result<(), NetError> {
        self.ablation.validate()?;
        if self.latent_dim == 0 || self.step_hidden == 0 || self.conv_channels == 0 {
            return Err(NetError::Spec("layer widths must be positive".into()));
        }
        if [&self.actor_hidden, &self.encoder_hidden, &self.critic_hidden].iter().any(|h| h.contains(&0)) {
            return Err(NetError::Spec("hidden widths must be positive".into()));
        }
        if self.conv_stride == 0 || self.conv_kernel == 0 {
            return Err(NetError::Spec("conv kernel and stride must be positive".into()));
        }
        let t = self.conv_steps();
        if t[1] == 0 || t[2] == 0 {
            return Err(NetError::Spec(format!("history {} too short for two conv layers", self.history)));
        }
        if !(self.init_std > 0.0 && self.action_scale > 0.0) {
            return Err(NetError::Spec("init_std and action_scale must be positive".into()));
        }
        Ok(())
    }

    /// Time steps before and after each conv layer.
    pub fn conv_steps(&self) -> [usize; 3] {
        let out = |t: usize| if t < self.conv_kernel { 0 } else { (t - self.conv_kernel) / self.conv_stride + 1 };
        let t1 = out(self.history);
        [self.history, t1, out(t1)]
    }

    pub fn actor_input_dim(&self) -> usize {
        let a = &self.ablation;
        OBS_DIM
            + a.exp_cols()
            + self.latent_dim
            + if a.no_ac { 0 } else { ALN_DIM }
            + if a.history_obs { self.history * OBS_DIM } else { 0 }
    }

    pub fn critic_input_dim(&self) -> usize {
        OBS_DIM + EXP_DIM + IMP_DIM
    }
}

/// Fully connected stack; ELU between layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(usize, usize)>,
}

impl Mlp {
    fn build(
        alloc: &mut impl FnMut(&str, usize, usize, f64) -> Result<usize, NetError>,
        prefix: &str,
        dims: &[usize],
        out_gain: f64,
    ) -> Result<Self, NetError> {
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let gain = if i + 2 == dims.len() { out_gain } else { 1.0 };
            let w = alloc(&format!("{prefix}.l{i}.w"), dims[i], dims[i + 1], gain)?;
            let b = alloc(&format!("{prefix}.l{i}.b"), 1, dims[i + 1], 0.0)?;
            layers.push((w, b));
        }
        Ok(Self { layers })
    }

    pub fn forward(&self, t: &mut Tape, mut x: Var) -> Result<Var, NetError> {
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (t.param(*w), t.param(*b));
            x = t.affine(x, w, b)?;
            if i + 1 < self.layers.len() {
                x = t.elu(x);
            }
        }
        Ok(x)
    }
}

/// Per-step MLP followed by two strided temporal convolutions and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEstimator {
    step: (usize, usize),
    conv: [(usize, usize); 2],
    head: (usize, usize),
    steps: [usize; 3],
    kernel: usize,
    stride: usize,
    /// Leading outputs that pass through a sigmoid.
    sigmoid_outputs: usize,
}

impl ConvEstimator {
    fn build(
        alloc: &mut impl FnMut(&str, usize, usize, f64) -> Result<usize, NetError>,
        prefix: &str,
        spec: &NetSpec,
        out: usize,
        sigmoid_outputs: usize,
    ) -> Result<Self, NetError> {
        let (h, c, k) = (spec.step_hidden, spec.conv_channels, spec.conv_kernel);
        let mut pair = |name: &str, rows, cols, gain| -> Result<(usize, usize), NetError> {
            Ok((alloc(&format!("{prefix}.{name}.w"), rows, cols, gain)?, alloc(&format!("{prefix}.{name}.b"), 1, cols, 0.0)?))
        };
        let step = pair("step", OBS_DIM, h, 1.0)?;
        let conv0 = pair("conv0", k * h, c, 1.0)?;
        let conv1 = pair("conv1", k * c, c, 1.0)?;
        let steps = spec.conv_steps();
        let head = pair("head", steps[2] * c, out, 1.0)?;
        Ok(Self { step, conv: [conv0, conv1], head, steps, kernel: k, stride: spec.conv_stride, sigmoid_outputs })
    }

    /// `hist` is `batch × (history · OBS_DIM)`, oldest step first.
    pub fn forward(&self, t: &mut Tape, hist: Var) -> Result<Var, NetError> {
        let batch = t.value(hist).rows;
        let affine = |t: &mut Tape, x, (w, b): (usize, usize)| {
            let (w, b) = (t.param(w), t.param(b));
            t.affine(x, w, b)
        };
        let x = t.reshape(hist, batch * self.steps[0], OBS_DIM)?;
        let x = affine(t, x, self.step)?;
        let mut x = t.elu(x);
        for (layer, t_in) in self.conv.iter().zip(&self.steps[..2]) {
            let cols = t.im2col(x, *t_in, self.kernel, self.stride)?;
            let y = affine(t, cols, *layer)?;
            x = t.elu(y);
        }
        let c = t.value(x).cols;
        let flat = t.reshape(x, batch, self.steps[2] * c)?;
        let y = affine(t, flat, self.head)?;
        let n = t.value(y).cols;
        if self.sigmoid_outputs == 0 {
            return Ok(y);
        }
        let s = t.slice_cols(y, 0, self.sigmoid_outputs)?;
        let s = t.sigmoid(s);
        if self.sigmoid_outputs == n {
            return Ok(s);
        }
        let rest = t.slice_cols(y, self.sigmoid_outputs, n - self.sigmoid_outputs)?;
        t.concat_cols(&[s, rest])
    }
}

/// Where the actor's explicit-parameter input comes from.
#[derive(Debug, Clone, Copy)]
pub enum ExpInput<'a> {
    /// Ground truth, `batch × EXP_DIM`.
    True(&'a Mat),
    /// The explicit estimator's output.
    Estimated,
}

/// Where the actor's latent comes from.
#[derive(Debug, Clone, Copy)]
pub enum LatentInput<'a> {
    /// Encoder applied to normalized intrinsics, `batch × IMP_DIM`.
    Encoder(&'a Mat),
    /// The implicit estimator's output.
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// Action means, `batch × ACTION_DIM`.
    pub mean: Mat,
    /// Explicit estimate, if the estimator exists.
    pub x_exp_hat: Option<Mat>,
    pub latent: Mat,
}

/// Actor, log-std, encoder, critic and both history estimators over one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub spec: NetSpec,
    pub store: ParamStore,
    actor: Mlp,
    log_std: usize,
    encoder: Mlp,
    critic: Mlp,
    exp_est: Option<ConvEstimator>,
    imp_est: ConvEstimator,
}

pub const POLICY_PREFIXES: [&str; 3] = ["actor.", "encoder.", "critic."];
pub const ESTIMATOR_PREFIX: &str = "est_";

impl Networks {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self, NetError> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let init_log_std = spec.init_std.ln();
        let mut alloc = |name: &str, rows, cols, gain: f64| {
            let value = if name.ends_with("log_std") {
                Mat::filled(rows, cols, init_log_std)
            } else if gain == 0.0 {
                Mat::zeros(rows, cols)
            } else {
                ParamStore::glorot(rows, cols, gain, rng)
            };
            store.add(name, value)
        };
        let layout = Layout::build(&spec, &mut alloc)?;
        Ok(layout.into_networks(spec, store))
    }

    /// Rebinds an existing store; every expected array must be present with the right shape.
    pub fn from_store(spec: NetSpec, store: ParamStore) -> Result<Self, NetError> {
        spec.validate()?;
        let mut seen = 0;
        let mut alloc = |name: &str, rows, cols, _gain| {
            let id = store.id(name).ok_or_else(|| NetError::Incompatible(format!("missing array {name}")))?;
            let m = &store.params[id].value;
            if (m.rows, m.cols) != (rows, cols) {
                return Err(NetError::Incompatible(format!("{name} is {}x{}, expected {rows}x{cols}", m.rows, m.cols)));
            }
            seen += 1;
            Ok(id)
        };
        let layout = Layout::build(&spec, &mut alloc)?;
        if seen != store.len() {
            return Err(NetError::Incompatible(format!("{} unexpected arrays", store.len() - seen)));
        }
        Ok(layout.into_networks(spec, store))
    }

    pub fn has_explicit_estimator(&self) -> bool {
        self.exp_est.is_some()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.store.params[self.log_std].value.data
    }

    pub fn policy_param_ids(&self) -> Vec<usize> {
        POLICY_PREFIXES.iter().flat_map(|p| self.store.ids_with_prefix(p)).collect()
    }

    pub fn estimator_param_ids(&self) -> Vec<usize> {
        self.store.ids_with_prefix(ESTIMATOR_PREFIX)
    }

    pub fn encode(&self, t: &mut Tape, x_imp: Var) -> Result<Var, NetError> {
        self.encoder.forward(t, x_imp)
    }

    pub fn estimate_explicit(&self, t: &mut Tape, hist: Var) -> Result<Option<Var>, NetError> {
        self.exp_est.as_ref().map(|e| e.forward(t, hist)).transpose()
    }

    pub fn estimate_implicit(&self, t: &mut Tape, hist: Var) -> Result<Var, NetError> {
        self.imp_est.forward(t, hist)
    }

    /// Critic value column from observation, true explicit parameters and normalized intrinsics.
    pub fn value(&self, t: &mut Tape, obs: &Mat, x_exp: &Mat, x_imp: &Mat) -> Result<Var, NetError> {
        let parts = [t.input(obs.clone()), t.input(x_exp.clone()), t.input(x_imp.clone())];
        let x = t.concat_cols(&parts)?;
        self.critic.forward(t, x)
    }

    /// Assembles the actor input. `x_exp` is the full explicit vector in use
    /// (estimated or true); gradients never flow into it.
    pub fn actor_input(&self, t: &mut Tape, obs: &Mat, x_exp: &Mat, latent: Var, hist: &Mat) -> Result<Var, NetError> {
        let a = self.spec.ablation;
        let mut parts = vec![t.input(obs.clone())];
        let cols = a.exp_cols();
        if cols > 0 {
            let mut m = Mat::zeros(x_exp.rows, cols);
            for r in 0..x_exp.rows {
                m.row_mut(r).copy_from_slice(&x_exp.row(r)[..cols]);
            }
            parts.push(t.input(m));
        }
        parts.push(latent);
        if !a.no_ac {
            let mut m = Mat::zeros(obs.rows, ALN_DIM);
            for r in 0..obs.rows {
                let x = x_exp.row(r);
                let wz = obs.row(r)[Observation::ANGULAR_VELOCITY + 2];
                m.row_mut(r).copy_from_slice(&[x[7] - x[4], x[8] - x[5], x[12] - wz]);
            }
            parts.push(t.input(m));
        }
        if a.history_obs {
            parts.push(t.input(hist.clone()));
        }
        t.concat_cols(&parts)
    }

    /// Action mean, bounded by `action_scale · tanh`.
    pub fn actor_mean(&self, t: &mut Tape, input: Var) -> Result<Var, NetError> {
        let y = self.actor.forward(t, input)?;
        let y = t.tanh(y);
        Ok(t.scale(y, self.spec.action_scale))
    }

    /// Diagonal-Gaussian log-density of `actions` under `mean` and the learned log-std, as a column.
    pub fn log_prob(&self, t: &mut Tape, mean: Var, actions: &Mat) -> Result<Var, NetError> {
        let rows = t.value(mean).rows;
        let ls = t.param(self.log_std);
        let ls = t.broadcast_rows(ls, rows)?;
        let a = t.input(actions.clone());
        let diff = t.sub(a, mean)?;
        let neg = t.scale(ls, -1.0);
        let inv = t.exp(neg);
        let z = t.mul(diff, inv)?;
        let z2 = t.square(z);
        let quad = t.row_sum(z2);
        let quad = t.scale(quad, -0.5);
        let norm = t.row_sum(ls);
        let lp = t.sub(quad, norm)?;
        Ok(t.add_scalar(lp, -0.5 * LN_2PI * ACTION_DIM as f64))
    }

    /// Entropy of the current action distribution (scalar node).
    pub fn entropy(&self, t: &mut Tape) -> Var {
        let ls = t.param(self.log_std);
        let s = t.sum(ls);
        t.add_scalar(s, 0.5 * (1.0 + LN_2PI) * ACTION_DIM as f64)
    }

    /// Forward pass without gradients.
    pub fn infer(&self, obs: &Mat, hist: &Mat, exp: ExpInput, latent: LatentInput) -> Result<Inference, NetError> {
        let mut t = Tape::new(&self.store);
        let h = t.input(hist.clone());
        let x_exp_hat = self.estimate_explicit(&mut t, h)?.map(|v| t.value(v).clone());
        let x_exp = match exp {
            ExpInput::True(m) => m.clone(),
            ExpInput::Estimated => x_exp_hat.clone().unwrap_or_else(|| Mat::zeros(obs.rows, EXP_DIM)),
        };
        let l = match latent {
            LatentInput::Encoder(x_imp) => {
                let x = t.input(x_imp.clone());
                self.encode(&mut t, x)?
            }
            LatentInput::Estimated => self.estimate_implicit(&mut t, h)?,
        };
        let input = self.actor_input(&mut t, obs, &x_exp, l, hist)?;
        let mean = self.actor_mean(&mut t, input)?;
        Ok(Inference { mean: t.value(mean).clone(), x_exp_hat, latent: t.value(l).clone() })
    }
}

struct Layout {
    actor: Mlp,
    log_std: usize,
    encoder: Mlp,
    critic: Mlp,
    exp_est: Option<ConvEstimator>,
    imp_est: ConvEstimator,
}

impl Layout {
    fn build(spec: &NetSpec, alloc: &mut impl FnMut(&str, usize, usize, f64) -> Result<usize, NetError>) -> Result<Self, NetError> {
        let dims = |input: usize, hidden: &[usize], out: usize| {
            let mut d = vec![input];
            d.extend_from_slice(hidden);
            d.push(out);
            d
        };
        let actor = Mlp::build(alloc, "actor", &dims(spec.actor_input_dim(), &spec.actor_hidden, ACTION_DIM), 0.01)?;
        let log_std = alloc("actor.log_std", 1, ACTION_DIM, 0.0)?;
        let encoder = Mlp::build(alloc, "encoder", &dims(IMP_DIM, &spec.encoder_hidden, spec.latent_dim), 1.0)?;
        let critic = Mlp::build(alloc, "critic", &dims(spec.critic_input_dim(), &spec.critic_hidden, 1), 1.0)?;
        let exp_est = if spec.ablation.no_ee {
            None
        } else {
            Some(ConvEstimator::build(alloc, "est_exp", spec, EXP_DIM, 4)?)
        };
        let imp_est = ConvEstimator::build(alloc, "est_imp", spec, spec.latent_dim, 0)?;
        Ok(Self { actor, log_std, encoder, critic, exp_est, imp_est })
    }

    fn into_networks(self, spec: NetSpec, store: ParamStore) -> Networks {
        Networks {
            spec,
            store,
            actor: self.actor,
            log_std: self.log_std,
            encoder: self.encoder,
            critic: self.critic,
            exp_est: self.exp_est,
            imp_est: self.imp_est,
        }
    }
}

/// Draws `mean + exp(log_std) · ε`.
pub fn sample_action<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, s)| {
            let e: f64 = rng.sample(StandardNormal);
            m + s.exp() * e
        })
        .collect()
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(a)
        .map(|((m, s), x)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - 0.5 * LN_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (1.0 + LN_2PI)).sum()
}
