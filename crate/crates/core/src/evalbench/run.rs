use super::{build_benchmark, BenchKind, BenchSpec, BenchmarkSet, BenchEpisode, EvalError, RangeSet};
use crate::env::{BalanceEnv, EpisodeConfig, RewardCoeffs, ACTION_DIM, EXP_DIM};
use crate::learn::TrainConfig;
use crate::nets::{ExpInput, LatentInput, Mat, NetSpec, Networks, Tape};
use crate::simcore::log::StateLog;
use crate::simcore::{RobotModel, SimConfig};
use crate::trajgen::TrajectoryStats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const RANDOM_SALT: u64 = 0x005E_ED0F_7A4D_0A11;

/// Simulator, reward and episode settings shared by every evaluated method.
#[derive(Debug, Clone)]
pub struct EvalSetup {
    pub model: Arc<RobotModel>,
    pub sim: SimConfig,
    pub reward: RewardCoeffs,
    pub episode: EpisodeConfig,
}

impl Default for EvalSetup {
    fn default() -> Self {
        Self::from_config(&TrainConfig::default())
    }
}

impl EvalSetup {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            model: Arc::new(RobotModel::default()),
            sim: cfg.sim.clone(),
            reward: cfg.reward.clone(),
            episode: cfg.episode.clone(),
        }
    }

    /// Rejects networks whose inputs do not fit this setup.
    pub fn check_compatible(&self, spec: &NetSpec) -> Result<(), EvalError> {
        if spec.history != self.episode.history {
            return Err(EvalError::Incompatible(format!(
                "observation history length: checkpoint expects {}, environment provides {}",
                spec.history, self.episode.history
            )));
        }
        if spec.action_scale > self.episode.action_clamp + 1e-12 {
            return Err(EvalError::Incompatible(format!(
                "action scale {} exceeds the action clamp {}",
                spec.action_scale, self.episode.action_clamp
            )));
        }
        spec.validate().map_err(|e| EvalError::Incompatible(e.to_string()))
    }

    fn reset(&self, ep: &BenchEpisode) -> BalanceEnv {
        BalanceEnv::reset(
            self.model.clone(),
            self.sim.clone(),
            self.reward.clone(),
            self.episode.clone(),
            ep.trajectory.clone(),
            &ep.draw,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Estimated explicit parameters and latent, as deployed.
    Estimated,
    /// Ground-truth explicit parameters and encoder latent.
    Privileged,
}

impl EvalMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "estimated" => Some(EvalMode::Estimated),
            "privileged" => Some(EvalMode::Privileged),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Deterministic policy mean.
    Policy { nets: &'a Networks, mode: EvalMode },
    /// Holds the nominal joint configuration.
    StandStill,
    /// Uniform actions over the clamp, seeded per episode.
    Random { seed: u64 },
}

impl Controller<'_> {
    pub fn label(&self) -> String {
        match self {
            Controller::Policy { mode: EvalMode::Estimated, .. } => "policy (estimated)".into(),
            Controller::Policy { mode: EvalMode::Privileged, .. } => "policy (privileged)".into(),
            Controller::StandStill => "stand still".into(),
            Controller::Random { .. } => "random".into(),
        }
    }
}

/// What the estimator report compares against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorSource {
    Networks,
    /// The ground truth itself; every error is exactly zero.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub estimate: [f64; EXP_DIM],
    pub truth: [f64; EXP_DIM],
}

/// Sums of estimator errors over one episode's decision steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimatorSums {
    pub steps: usize,
    pub l1: [f64; EXP_DIM],
    pub l1_sq: [f64; EXP_DIM],
    pub l2: f64,
    pub l2_sq: f64,
}

/// Per-episode totals over pre-collision steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeRecord {
    pub index: usize,
    pub collided: bool,
    pub steps: usize,
    pub height_violations: usize,
    pub position_sum: f64,
    pub rotation_sum: f64,
    pub power_sum: f64,
    pub state_log: Option<String>,
    pub estimator: Option<EstimatorSums>,
    pub trace: Option<Vec<TraceRow>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeOptions {
    pub state_log: bool,
    pub estimator: Option<EstimatorSource>,
    pub trace: bool,
}

fn row(v: &[f64]) -> Mat {
    Mat { rows: 1, cols: v.len(), data: v.to_vec() }
}

fn encoder_latent(nets: &Networks, x_imp: &Mat) -> Result<Mat, EvalError> {
    let mut t = Tape::new(&nets.store);
    let x = t.input(x_imp.clone());
    let l = nets.encode(&mut t, x)?;
    Ok(t.value(l).clone())
}

/// Rolls one benchmark episode to its end or first collision.
pub fn run_episode(
    setup: &EvalSetup,
    ctrl: &Controller,
    ep: &BenchEpisode,
    opts: EpisodeOptions,
) -> Result<EpisodeRecord, EvalError> {
    let mut env = setup.reset(ep);
    let salt = match ctrl {
        Controller::Random { seed } => RANDOM_SALT ^ seed.rotate_left(17),
        _ => RANDOM_SALT,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ep.seed ^ salt);
    let mut rec = EpisodeRecord { index: ep.index, ..Default::default() };
    let mut log = opts.state_log.then(|| {
        let mut l = StateLog::new();
        l.record(&env.sim);
        l
    });
    let mut sums = opts.estimator.map(|_| EstimatorSums::default());
    let mut trace = opts.trace.then(Vec::new);
    if opts.estimator.is_some() && !matches!(ctrl, Controller::Policy { .. }) {
        return Err(EvalError::Invalid("estimator accuracy needs a policy".into()));
    }
    let clamp = env.episode.action_clamp;

    while !env.is_done() {
        let mut action = [0.0; ACTION_DIM];
        match ctrl {
            Controller::StandStill => {}
            Controller::Random { .. } => action.iter_mut().for_each(|a| *a = rng.gen_range(-clamp..=clamp)),
            Controller::Policy { nets, mode } => {
                let obs = row(env.observation().as_slice());
                let hist = row(&env.history().flatten());
                let x_exp = env.explicit_params();
                let x_imp = row(&env.implicit_params());
                let truth = row(&x_exp.0);
                let inf = match mode {
                    EvalMode::Estimated => nets.infer(&obs, &hist, ExpInput::Estimated, LatentInput::Estimated)?,
                    EvalMode::Privileged => nets.infer(&obs, &hist, ExpInput::True(&truth), LatentInput::Encoder(&x_imp))?,
                };
                action.copy_from_slice(&inf.mean.data);
                if let (Some(src), Some(s)) = (opts.estimator, sums.as_mut()) {
                    let (x_hat, l_hat, l) = match src {
                        EstimatorSource::GroundTruth => {
                            let l = encoder_latent(nets, &x_imp)?.data;
                            (x_exp.0.to_vec(), l.clone(), l)
                        }
                        EstimatorSource::Networks => {
                            let x_hat = inf.x_exp_hat.clone().ok_or_else(|| {
                                EvalError::Incompatible("the checkpoint has no explicit estimator".into())
                            })?;
                            let l_hat = match mode {
                                EvalMode::Estimated => inf.latent.clone(),
                                EvalMode::Privileged => {
                                    nets.infer(&obs, &hist, ExpInput::True(&truth), LatentInput::Estimated)?.latent
                                }
                            };
                            (x_hat.data, l_hat.data, encoder_latent(nets, &x_imp)?.data)
                        }
                    };
                    s.steps += 1;
                    for i in 0..EXP_DIM {
                        let e = (x_hat[i] - x_exp.0[i]).abs();
                        s.l1[i] += e;
                        s.l1_sq[i] += e * e;
                    }
                    let d = l_hat.iter().zip(&l).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    s.l2 += d;
                    s.l2_sq += d * d;
                    if let Some(tr) = trace.as_mut() {
                        let mut estimate = [0.0; EXP_DIM];
                        estimate.copy_from_slice(&x_hat[..EXP_DIM]);
                        tr.push(TraceRow { t: env.sim.time, estimate, truth: x_exp.0 });
                    }
                }
            }
        }
        let r = env.step(&action)?;
        if r.info.collision.is_some() {
            rec.collided = true;
            break;
        }
        rec.steps += 1;
        rec.height_violations += usize::from(env.height_violated());
        let p = env.position_in_platform();
        rec.position_sum += p.x.hypot(p.y);
        rec.rotation_sum += env.rotation_deviation();
        rec.power_sum += r.info.power;
        if let Some(l) = log.as_mut() {
            l.record(&env.sim);
        }
    }
    rec.state_log = log.map(StateLog::into_string);
    rec.estimator = sums;
    rec.trace = trace;
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    /// Sample standard deviation across shards.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub episodes: usize,
    pub steps: usize,
    /// Fraction of episodes that ended in a collision.
    pub collision_rate: MetricStat,
    /// Fraction of pre-collision steps outside the height band.
    pub height_violation_rate: MetricStat,
    /// Mean planar distance from the platform center (m).
    pub position_deviation: MetricStat,
    /// Mean absolute yaw change relative to the platform (rad).
    pub rotation_deviation: MetricStat,
    /// Mean positive joint power (W).
    pub power: MetricStat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    collision: f64,
    height: f64,
    position: f64,
    rotation: f64,
    power: f64,
}

fn pool(records: &[EpisodeRecord]) -> Point {
    let n = records.len().max(1) as f64;
    let steps = records.iter().map(|r| r.steps).sum::<usize>();
    let per_step = |f: fn(&EpisodeRecord) -> f64| {
        if steps == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / steps as f64
        }
    };
    Point {
        collision: records.iter().filter(|r| r.collided).count() as f64 / n,
        height: per_step(|r| r.height_violations as f64),
        position: per_step(|r| r.position_sum),
        rotation: per_step(|r| r.rotation_sum),
        power: per_step(|r| r.power_sum),
    }
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl MetricsReport {
    /// Pools the records; stds come from `shards` contiguous shards.
    pub fn from_records(label: &str, records: &[EpisodeRecord], shards: usize) -> Self {
        let all = pool(records);
        let k = shards.clamp(1, records.len().max(1));
        let size = records.len().div_ceil(k).max(1);
        let parts: Vec<Point> = records.chunks(size).map(pool).collect();
        let stat = |mean: f64, f: fn(&Point) -> f64| MetricStat {
            mean,
            std: sample_std(&parts.iter().map(f).collect::<Vec<_>>()),
        };
        Self {
            label: label.to_string(),
            episodes: records.len(),
            steps: records.iter().map(|r| r.steps).sum(),
            collision_rate: stat(all.collision, |p| p.collision),
            height_violation_rate: stat(all.height, |p| p.height),
            position_deviation: stat(all.position, |p| p.position),
            rotation_deviation: stat(all.rotation, |p| p.rotation),
            power: stat(all.power, |p| p.power),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub shards: usize,
    /// Keep the state log of the first this-many episodes.
    pub state_logs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { shards: 5, state_logs: 0 }
    }
}

/// Evaluates every episode (in parallel) and reduces in episode order.
pub fn evaluate(
    setup: &EvalSetup,
    ctrl: &Controller,
    bench: &BenchmarkSet,
    opts: &EvalOptions,
) -> Result<(MetricsReport, Vec<EpisodeRecord>), EvalError> {
    if let Controller::Policy { nets, .. } = ctrl {
        setup.check_compatible(&nets.spec)?;
    }
    let records = bench
        .episodes
        .par_iter()
        .enumerate()
        .map(|(k, ep)| {
            let o = EpisodeOptions { state_log: k < opts.state_logs, ..Default::default() };
            run_episode(setup, ctrl, ep, o)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((MetricsReport::from_records(&ctrl.label(), &records, opts.shards), records))
}

/// Per-dimension explicit L1 errors and the latent L2 error with their stds over steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorAccuracyReport {
    pub steps: usize,
    pub explicit: Vec<MetricStat>,
    pub implicit: MetricStat,
}

fn mean_std(sum: f64, sum_sq: f64, n: usize) -> MetricStat {
    if n == 0 {
        return MetricStat::default();
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    MetricStat { mean, std: var.sqrt() }
}

/// Rolls the policy over the bench and compares the estimators with the
/// ground truth at every decision step. Returns the trace of the first episode.
pub fn estimator_accuracy(
    setup: &EvalSetup,
    nets: &Networks,
    mode: EvalMode,
    source: EstimatorSource,
    bench: &BenchmarkSet,
) -> Result<(EstimatorAccuracyReport, Vec<TraceRow>), EvalError> {
    setup.check_compatible(&nets.spec)?;
    if source == EstimatorSource::Networks && !nets.has_explicit_estimator() {
        return Err(EvalError::Incompatible("the checkpoint has no explicit estimator".into()));
    }
    let ctrl = Controller::Policy { nets, mode };
    let records = bench
        .episodes
        .par_iter()
        .enumerate()
        .map(|(k, ep)| {
            let o = EpisodeOptions { state_log: false, estimator: Some(source), trace: k == 0 };
            run_episode(setup, &ctrl, ep, o)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = EstimatorSums::default();
    for s in records.iter().filter_map(|r| r.estimator.as_ref()) {
        total.steps += s.steps;
        for i in 0..EXP_DIM {
            total.l1[i] += s.l1[i];
            total.l1_sq[i] += s.l1_sq[i];
        }
        total.l2 += s.l2;
        total.l2_sq += s.l2_sq;
    }
    let report = EstimatorAccuracyReport {
        steps: total.steps,
        explicit: (0..EXP_DIM).map(|i| mean_std(total.l1[i], total.l1_sq[i], total.steps)).collect(),
        implicit: mean_std(total.l2, total.l2_sq, total.steps),
    };
    let trace = records.into_iter().next().and_then(|r| r.trace).unwrap_or_default();
    Ok((report, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
    pub waypoints: usize,
    pub mean_path_length: f64,
    pub mean_speed: f64,
    pub stats: Vec<TrajectoryStats>,
}

/// Trajectory statistics for each waypoint count, `per_count` trajectories each.
pub fn waypoint_trend(ranges: RangeSet, counts: &[usize], per_count: usize, seed: u64) -> Result<Vec<TrendPoint>, EvalError> {
    counts
        .iter()
        .map(|&n| {
            let spec = BenchSpec {
                count: per_count,
                seed: seed.wrapping_add(n as u64),
                ranges,
                kind: BenchKind::Moving(Some(n)),
            };
            let set = build_benchmark(&spec)?;
            let stats: Vec<TrajectoryStats> = set.episodes.into_iter().map(|e| e.stats).collect();
            let k = stats.len() as f64;
            Ok(TrendPoint {
                waypoints: n,
                mean_path_length: stats.iter().map(|s| s.path_length).sum::<f64>() / k,
                mean_speed: stats.iter().map(|s| s.mean_speed).sum::<f64>() / k,
                stats,
            })
        })
        .collect()
}
