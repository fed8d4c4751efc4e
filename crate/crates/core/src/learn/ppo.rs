use super::{normalize, PpoConfig, RoaConfig, RolloutBuffer, TrainError};
use crate::nets::{clip_grad_norm, Adam, Mat, NetError, Networks, Tape, Var};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Rows of a rollout buffer selected for one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub obs: Mat,
    pub hist: Mat,
    pub x_exp: Mat,
    pub x_imp: Mat,
    pub actions: Mat,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn from_buffer(buf: &RolloutBuffer, advantages: &[f64], idx: &[usize]) -> Self {
        Self {
            obs: buf.obs.select_rows(idx),
            hist: buf.hist.select_rows(idx),
            x_exp: buf.x_exp.select_rows(idx),
            x_imp: buf.x_imp.select_rows(idx),
            actions: buf.actions.select_rows(idx),
            old_log_probs: idx.iter().map(|i| buf.log_probs[*i]).collect(),
            advantages: idx.iter().map(|i| advantages[*i]).collect(),
            returns: idx.iter().map(|i| buf.returns[*i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }
}

fn column(v: &[f64]) -> Mat {
    Mat { rows: v.len(), cols: 1, data: v.to_vec() }
}

/// Nodes of the policy-side objective.
#[derive(Debug, Clone, Copy)]
pub struct PpoLosses {
    pub total: Var,
    /// Negated clipped surrogate.
    pub policy: Var,
    pub value: Var,
    pub entropy: Var,
    /// `‖sg[l̂] − l‖²`, batch mean, before the λ weight.
    pub regularizer: Var,
    pub ratio: Var,
}

/// Clipped surrogate + value error − entropy bonus + λ · encoder regularizer.
pub fn ppo_losses(t: &mut Tape, nets: &Networks, mb: &Minibatch, cfg: &PpoConfig, lambda: f64) -> Result<PpoLosses, NetError> {
    let rows = mb.len() as f64;
    let xi = t.input(mb.x_imp.clone());
    let latent = nets.encode(t, xi)?;
    let input = nets.actor_input(t, &mb.obs, &mb.x_exp, latent, &mb.hist)?;
    let mean = nets.actor_mean(t, input)?;
    let lp = nets.log_prob(t, mean, &mb.actions)?;
    let old = t.input(column(&mb.old_log_probs));
    let diff = t.sub(lp, old)?;
    let ratio = t.exp(diff);
    let adv = t.input(column(&mb.advantages));
    let s1 = t.mul(ratio, adv)?;
    let clipped = t.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let s2 = t.mul(clipped, adv)?;
    let surr = t.min(s1, s2)?;
    let surr = t.mean(surr);
    let policy = t.scale(surr, -1.0);

    let v = nets.value(t, &mb.obs, &mb.x_exp, &mb.x_imp)?;
    let ret = t.input(column(&mb.returns));
    let err = t.sub(v, ret)?;
    let err = t.square(err);
    let value = t.mean(err);

    let entropy = nets.entropy(t);

    let h = t.input(mb.hist.clone());
    let est = nets.estimate_implicit(t, h)?;
    let est = t.stop_grad(est);
    let gap = t.sub(est, latent)?;
    let gap = t.square(gap);
    let gap = t.sum(gap);
    let regularizer = t.scale(gap, 1.0 / rows);

    let vterm = t.scale(value, cfg.value_coef);
    let eterm = t.scale(entropy, -cfg.entropy_coef);
    let rterm = t.scale(regularizer, lambda);
    let total = t.add(policy, vterm)?;
    let total = t.add(total, eterm)?;
    let total = t.add(total, rterm)?;
    Ok(PpoLosses { total, policy, value, entropy, regularizer, ratio })
}

#[derive(Debug, Clone, Copy)]
pub struct EstimatorLosses {
    pub total: Var,
    /// `‖x̂_exp − x_exp‖²`, batch mean; absent without an explicit estimator.
    pub explicit: Option<Var>,
    /// `‖l̂ − sg[l]‖²`, batch mean.
    pub implicit: Var,
}

pub fn estimator_losses(t: &mut Tape, nets: &Networks, hist: &Mat, x_exp: &Mat, x_imp: &Mat) -> Result<EstimatorLosses, NetError> {
    let rows = hist.rows as f64;
    let h = t.input(hist.clone());
    let sq_mean = |t: &mut Tape, a: Var, b: Var| -> Result<Var, NetError> {
        let d = t.sub(a, b)?;
        let d = t.square(d);
        let s = t.sum(d);
        Ok(t.scale(s, 1.0 / rows))
    };
    let explicit = match nets.estimate_explicit(t, h)? {
        Some(xh) => {
            let x = t.input(x_exp.clone());
            Some(sq_mean(t, xh, x)?)
        }
        None => None,
    };
    let lh = nets.estimate_implicit(t, h)?;
    let xi = t.input(x_imp.clone());
    let l = nets.encode(t, xi)?;
    let l = t.stop_grad(l);
    let implicit = sq_mean(t, lh, l)?;
    let total = match explicit {
        Some(e) => t.add(e, implicit)?,
        None => implicit,
    };
    Ok(EstimatorLosses { total, explicit, implicit })
}

/// Means over every minibatch step of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub regularizer: f64,
    pub explicit_loss: f64,
    pub implicit_loss: f64,
    pub grad_norm: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

fn check(what: &str, v: f64) -> Result<f64, TrainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TrainError::Divergence { iteration: 0, what: what.into(), checkpoint: None })
    }
}

/// PPO epochs over shuffled minibatches. Each minibatch takes one policy
/// step (actor, log-std, critic, encoder) and one estimator step.
pub fn ppo_update(
    nets: &mut Networks,
    policy_opt: &mut Adam,
    estimator_opt: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    roa: &RoaConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, TrainError> {
    let mut adv = buf.advantages.clone();
    normalize(&mut adv);
    let n = buf.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let size = n.div_ceil(cfg.minibatches);
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(size) {
            let mb = Minibatch::from_buffer(buf, &adv, chunk);
            let (mut grads, l) = {
                let mut t = Tape::new(&nets.store);
                let l = ppo_losses(&mut t, nets, &mb, cfg, roa.lambda)?;
                let ratio = &t.value(l.ratio).data;
                let kl = ratio.iter().map(|r| (r - 1.0) - r.ln()).sum::<f64>() / ratio.len() as f64;
                let clipped = ratio.iter().filter(|r| (**r - 1.0).abs() > cfg.clip).count() as f64 / ratio.len() as f64;
                let vals = [
                    check("total loss", t.value(l.total).data[0])?,
                    t.value(l.policy).data[0],
                    t.value(l.value).data[0],
                    t.value(l.entropy).data[0],
                    t.value(l.regularizer).data[0],
                    kl,
                    clipped,
                ];
                (t.backward(l.total)?, vals)
            };
            let gn = check("policy gradient", clip_grad_norm(&mut grads, cfg.max_grad_norm))?;
            policy_opt.step(&mut nets.store, &grads);

            let (mut grads, e) = {
                let mut t = Tape::new(&nets.store);
                let l = estimator_losses(&mut t, nets, &mb.hist, &mb.x_exp, &mb.x_imp)?;
                let ex = l.explicit.map_or(0.0, |v| t.value(v).data[0]);
                let im = t.value(l.implicit).data[0];
                check("estimator loss", t.value(l.total).data[0])?;
                (t.backward(l.total)?, [ex, im])
            };
            check("estimator gradient", clip_grad_norm(&mut grads, cfg.max_grad_norm))?;
            estimator_opt.step(&mut nets.store, &grads);

            stats.policy_loss += l[1];
            stats.value_loss += l[2];
            stats.entropy += l[3];
            stats.regularizer += l[4];
            stats.approx_kl += l[5];
            stats.clip_fraction += l[6];
            stats.grad_norm += gn;
            stats.explicit_loss += e[0];
            stats.implicit_loss += e[1];
            count += 1.0;
        }
    }
    for v in [
        &mut stats.policy_loss,
        &mut stats.value_loss,
        &mut stats.entropy,
        &mut stats.regularizer,
        &mut stats.explicit_loss,
        &mut stats.implicit_loss,
        &mut stats.grad_norm,
        &mut stats.approx_kl,
        &mut stats.clip_fraction,
    ] {
        *v /= count;
    }
    Ok(stats)
}
