//! End-to-end acceptance checks. Runs every check in order, prints one
//! PASS/FAIL line per check and exits non-zero if any failed.
//!
//! Pass substrings as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- spline physics`.

use quadbal::env::{compute_reward, EXP_NAMES};
use quadbal::evalbench::{
    build_benchmark, estimator_accuracy, evaluate, waypoint_trend, BenchKind, BenchSpec, BenchmarkSet, Controller,
    EstimatorSource, EvalMode, EvalOptions, EvalSetup, RangeSet,
};
use quadbal::learn::{estimator_losses, ppo_losses, train, Minibatch, PpoConfig, TrainConfig, TrainOutcome};
use quadbal::nets::{load_checkpoint, Mat, NetSpec, Networks, ParamStore, Tape, Var};
use quadbal::env::{RewardCoeffs, ACTION_DIM, EXP_DIM, IMP_DIM, OBS_DIM};
use quadbal::simcore::{
    apply_pd_targets, contact_forces, step_platform, step_robot, ContactResult, IntrinsicParams, PlatformGains,
    PlatformSim, RobotModel, RobotState, SimConfig, Simulation, TORQUE_LIMIT,
};
use quadbal::spatial::{euler_to_rotation, EulerXYZ, Rotation, Vec3};
use quadbal::trajgen::{generate_one, CubicSpline, PlatformTrajectory, TrajGenConfig, Waypoint6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn minutes(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// Benchmark statistics

fn benchmark_statistics() -> Outcome {
    let start = Instant::now();
    let bench = build_benchmark(&BenchSpec::new(10_000, 0, RangeSet::Test)).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let s = bench.mean_stats();
    let length_ok = (s.path_length - 7.12).abs() <= 0.2 * 7.12;
    let speed_ok = (s.mean_speed - 0.69).abs() <= 0.2 * 0.69;
    let time_ok = took < Duration::from_secs(300);
    verdict(
        length_ok && speed_ok && time_ok,
        format!(
            "10000 trajectories: mean path length {:.3} m (target 7.12 ± 20%), mean speed {:.3} m/s (target 0.69 ± 20%), {}",
            s.path_length,
            s.mean_speed,
            minutes(took)
        ),
    )
}

fn waypoint_count_trend() -> Outcome {
    let start = Instant::now();
    let counts: Vec<usize> = (5..=15).collect();
    let points = waypoint_trend(RangeSet::Train, &counts, 500, 0).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let increasing = |f: fn(&quadbal::evalbench::TrendPoint) -> f64| points.windows(2).all(|w| f(&w[1]) > f(&w[0]));
    let lengths = increasing(|p| p.mean_path_length);
    let speeds = increasing(|p| p.mean_speed);
    let summary: Vec<String> = points.iter().map(|p| format!("{}:{:.2}m", p.waypoints, p.mean_path_length)).collect();
    verdict(
        lengths && speeds && took < Duration::from_secs(120),
        format!("lengths increasing {lengths}, speeds increasing {speeds}, [{}], {}", summary.join(" "), minutes(took)),
    )
}

// ---------------------------------------------------------------------------
// Splines

fn spline_correctness() -> Outcome {
    let cfg = TrajGenConfig::testing();
    let mut rng = seeded(11);
    let (mut knot_err, mut d1_err, mut d2_err, mut end_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let h = 1e-5;
    let rel = |ana: f64, num: f64| (ana - num).abs() / ana.abs().max(1e-3);
    for _ in 0..1000 {
        let n = rng.gen_range(cfg.min_waypoints..=cfg.max_waypoints);
        let traj = generate_one(&cfg, n, &mut rng).map_err(|e| e.to_string())?;
        for (t, w) in traj.knots().iter().zip(traj.waypoints()) {
            let p = traj.query(*t).map_err(|e| e.to_string())?.pose_array();
            for (a, b) in p.iter().zip(w.to_array()) {
                knot_err = knot_err.max((a - b).abs());
            }
        }
        let t_end = traj.duration();
        for spline in traj.splines() {
            end_err = end_err.max(spline.eval(0.0).2.abs()).max(spline.eval(t_end).2.abs());
            for _ in 0..5 {
                let t = rng.gen_range(h..t_end - h);
                let (_, d1, d2) = spline.eval(t);
                let (up, down) = (spline.eval(t + h), spline.eval(t - h));
                d1_err = d1_err.max(rel(d1, (up.0 - down.0) / (2.0 * h)));
                d2_err = d2_err.max(rel(d2, (up.1 - down.1) / (2.0 * h)));
            }
        }
    }
    // An independent natural spline through a smooth function: zero end curvature.
    let knots: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
    let values: Vec<f64> = knots.iter().map(|t| (1.3 * t).sin()).collect();
    let s = CubicSpline::natural(&knots, &values).map_err(|e| e.to_string())?;
    end_err = end_err.max(s.eval(0.0).2.abs()).max(s.eval(4.0).2.abs());
    verdict(
        knot_err <= 1e-9 && d1_err < 1e-5 && d2_err < 1e-5 && end_err <= 1e-9,
        format!(
            "1000 trajectories: knot error {knot_err:.2e}, first-derivative rel. error {d1_err:.2e}, second-derivative rel. error {d2_err:.2e}, end curvature {end_err:.2e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Rewards

fn level_platform() -> PlatformSim {
    let ground = PlatformTrajectory::stationary(Waypoint6::default(), 10.0);
    PlatformSim::on_trajectory(&ground, [2.0, 2.0, 0.2], PlatformGains::uniform(1.0, 0.02), 400.0, 1600.0)
}

fn random_transition(m: &RobotModel, rng: &mut ChaCha8Rng) -> (RobotState, RobotState, PlatformSim, [f64; 12], [f64; 12]) {
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    let mut plat = level_platform();
    for k in 0..6 {
        plat.pose[k] = u(-0.7, 0.7);
        plat.rates[k] = u(-2.0, 2.0);
    }
    let make = |u: &mut dyn FnMut(f64, f64) -> f64| {
        let r = euler_to_rotation(EulerXYZ::new(u(-1.0, 1.0), u(-1.0, 1.0), u(-3.0, 3.0)));
        let p = Vec3::new(u(-1.5, 1.5), u(-1.5, 1.5), u(-0.5, 1.5));
        let v = Vec3::new(u(-3.0, 3.0), u(-3.0, 3.0), u(-3.0, 3.0));
        let w = Vec3::new(u(-5.0, 5.0), u(-5.0, 5.0), u(-5.0, 5.0));
        let mut s = RobotState::standing(m, p, r, v, w);
        for j in 0..12 {
            s.q[j] = u(m.q_lower[j], m.q_upper[j]);
            s.qd[j] = u(-20.0, 20.0);
            s.qdd[j] = u(-500.0, 500.0);
            s.tau[j] = u(-TORQUE_LIMIT, TORQUE_LIMIT);
        }
        for leg in 0..4 {
            s.contacts[leg] = u(0.0, 1.0) < 0.5;
            s.swing_time[leg] = u(0.0, 2.0);
            s.contact_time[leg] = u(0.0, 2.0);
            s.foot_forces[leg] = Vec3::new(u(-50.0, 50.0), u(-50.0, 50.0), u(0.0, 200.0));
        }
        s
    };
    let s = make(&mut u);
    let prev = make(&mut u);
    let mut a = [0.0; 12];
    let mut ap = [0.0; 12];
    for j in 0..12 {
        a[j] = u(-0.6, 0.6);
        ap[j] = u(-0.6, 0.6);
    }
    (s, prev, plat, a, ap)
}

/// Hand-worked reward cases on a level platform whose top surface is the
/// world origin. Each case yields (description, computed, expected).
fn reward_oracle_cases() -> Vec<(&'static str, f64, f64)> {
    let m = RobotModel::a1_like();
    let c = RewardCoeffs::default();
    let plat = level_platform();
    let at = |x: f64, y: f64, z: f64| RobotState::standing(&m, Vec3::new(x, y, z), Rotation::identity(), Vec3::zeros(), Vec3::zeros());
    let zero = [0.0; 12];
    let r = |s: &RobotState, prev: &RobotState, a: &[f64; 12], ap: &[f64; 12], c: &RewardCoeffs| {
        compute_reward(&m, s, prev, &plat, a, ap, c)
    };
    let mut out = Vec::new();

    let still = at(0.0, 0.0, 0.37);
    let b = r(&still, &still, &zero, &zero, &c);
    out.push(("frozen at center: centering", b.task[1], 3.0));
    out.push(("frozen at center: alignment", b.task[2], 2.0));
    out.push(("frozen at center: upright", b.task[3], 1.0));
    out.push(("frozen at center: height", b.task[4], 4.0));
    out.push(("frozen at center: no collision", b.task[0], 0.0));

    let s = at(0.3, 0.4, 0.37);
    out.push(("0.5 m off center", r(&s, &s, &zero, &zero, &c).task[1], 3.0 * (-0.5f64 / 1.2).exp()));
    let s = at(0.0, 0.0, 0.47);
    out.push(("0.1 m too high", r(&s, &s, &zero, &zero, &c).task[4], 4.0 * (-1.0f64).exp()));
    let s = at(0.0, 0.0, 0.02);
    out.push(("body on the platform", r(&s, &s, &zero, &zero, &c).task[0], -10.0));

    let mut s = at(0.0, 0.0, 0.37);
    s.orientation = euler_to_rotation(EulerXYZ::new(0.06, 0.08, 0.0));
    out.push(("tilted by 0.1 rad", r(&s, &s, &zero, &zero, &c).task[3], (-0.5f64).exp()));

    let mut s = at(0.0, 0.0, 0.37);
    s.linear_velocity = Vec3::new(0.3, 0.0, 0.0);
    let b = r(&s, &s, &zero, &zero, &c);
    out.push(("drifting at 0.3 m/s: alignment", b.task[2], 2.0 * (-1.0f64).exp()));
    out.push(("drifting at 0.3 m/s: foot slip", b.reg[6], -0.05 * 4.0 * 0.3));

    let mut s = at(0.0, 0.0, 0.37);
    s.angular_velocity = Vec3::new(0.0, 0.0, 0.15);
    out.push(("yawing at 0.15 rad/s", r(&s, &s, &zero, &zero, &c).task[2], 2.0 * (-0.5f64).exp()));

    let mut s = at(0.0, 0.0, 0.37);
    let mut prev = s.clone();
    s.tau = [1.5; 12];
    prev.tau = [0.5; 12];
    let a = [0.1; 12];
    let smooth = -(1e-7 * 12f64.sqrt() + 1e-4 * 0.12f64.sqrt());
    out.push(("torque and action changes", r(&s, &prev, &a, &zero, &c).reg[0], smooth));

    let mut s = at(0.0, 0.0, 0.37);
    s.tau = [2.0; 12];
    s.qd = [1.0; 12];
    s.qdd = [10.0; 12];
    let b = r(&s, &s, &zero, &zero, &c);
    out.push(("effort magnitudes", b.reg[1], -(1e-4 * 48f64.sqrt() + 1e-7 * 12f64.sqrt() + 1e-6 * 1200f64.sqrt())));
    out.push(("positive mechanical power", b.reg[2], -1e-5 * 24.0));
    s.tau = [-2.0; 12];
    out.push(("braking power is free", r(&s, &s, &zero, &zero, &c).reg[2], 0.0));

    let mut s = at(0.0, 0.0, 0.37);
    s.foot_forces = [Vec3::new(0.0, 0.0, 80.0); 4];
    out.push(("foot forces above tolerance", r(&s, &s, &zero, &zero, &c).reg[3], -0.01 * 120.0));
    s.foot_forces = [Vec3::new(0.0, 30.0, 40.0); 4];
    out.push(("foot forces at tolerance", r(&s, &s, &zero, &zero, &c).reg[3], 0.0));

    let mut prev = at(0.0, 0.0, 0.37);
    let mut s = prev.clone();
    prev.contacts = [false, true, true, true];
    s.contacts = [true, false, true, true];
    s.swing_time[0] = 0.3;
    s.contact_time[1] = 0.2;
    let b = r(&s, &prev, &zero, &zero, &c);
    out.push(("touchdown after 0.3 s swing", b.reg[4], -2.0 * 0.2));
    out.push(("liftoff after 0.2 s stance", b.reg[5], -3.0 * -0.3));
    let abs = RewardCoeffs { abs_duration_terms: true, ..c.clone() };
    out.push(("liftoff after 0.2 s stance, absolute", r(&s, &prev, &zero, &zero, &abs).reg[5], -3.0 * 0.3));

    let mut moving = level_platform();
    moving.pose[5] = 0.4;
    moving.rates = [0.3, -0.2, 0.0, 0.0, 0.0, 0.5];
    let frame = moving.frame();
    let p = frame.apply(&Vec3::new(0.2, 0.1, 0.37));
    let s = RobotState::standing(&m, p, frame.rotation, moving.point_velocity(&p), moving.angular_velocity());
    let b = compute_reward(&m, &s, &s, &moving, &zero, &zero, &c);
    out.push(("riding a moving platform: no slip", b.reg[6], 0.0));
    // Off-center by r on a platform yawing at w: the body lags the center velocity by w * |r|.
    let lag = 0.5 * 0.2f64.hypot(0.1);
    out.push(("riding a moving platform: alignment", b.task[2], 2.0 * (-lag / 0.3).exp()));
    out
}

fn reward_suite() -> Outcome {
    let m = RobotModel::a1_like();
    let c = RewardCoeffs::default();
    let mut rng = seeded(5);
    for i in 0..100_000 {
        let (s, prev, plat, a, ap) = random_transition(&m, &mut rng);
        let r = compute_reward(&m, &s, &prev, &plat, &a, &ap, &c);
        r.check_bounds(&c).map_err(|e| format!("random state {i}: {e}"))?;
    }
    let cases = reward_oracle_cases();
    let bad: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-12 * (1.0 + want.abs()))
        .map(|(name, got, want)| format!("{name}: {got} != {want}"))
        .collect();
    verdict(
        bad.is_empty() && cases.len() >= 20,
        if bad.is_empty() {
            format!("bounds hold on 100000 random transitions; {} oracle cases match", cases.len())
        } else {
            bad.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// Autodiff

fn random_mat(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Mat {
    Mat { rows, cols, data: (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect() }
}

/// Largest relative disagreement between analytic and central-difference gradients.
fn fd_error(store: &ParamStore, loss: impl Fn(&mut Tape) -> Var) -> f64 {
    let grads = {
        let mut t = Tape::new(store);
        let l = loss(&mut t);
        t.backward(l).expect("backward")
    };
    let eval = |s: &ParamStore| {
        let mut t = Tape::new(s);
        let l = loss(&mut t);
        t.value(l).data[0]
    };
    let h = 1e-5;
    let mut s = store.clone();
    let mut worst = 0.0f64;
    for i in 0..store.len() {
        for k in 0..store.params[i].value.data.len() {
            let x0 = store.params[i].value.data[k];
            s.params[i].value.data[k] = x0 + h;
            let up = eval(&s);
            s.params[i].value.data[k] = x0 - h;
            let down = eval(&s);
            s.params[i].value.data[k] = x0;
            let num = (up - down) / (2.0 * h);
            let ana = grads.get(i).map_or(0.0, |g| g.data[k]);
            worst = worst.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-3));
        }
    }
    worst
}

fn small_spec() -> NetSpec {
    NetSpec {
        history: 12,
        latent_dim: 3,
        actor_hidden: vec![7, 5],
        encoder_hidden: vec![6],
        critic_hidden: vec![6, 4],
        step_hidden: 4,
        conv_channels: 3,
        conv_kernel: 3,
        conv_stride: 2,
        ..NetSpec::default()
    }
}

fn autodiff() -> Outcome {
    let mut r = seeded(1);
    let mut errors = Vec::new();

    let mut store = ParamStore::new();
    let a = store.add("a", random_mat(3, 4, &mut r)).unwrap();
    let b = store.add("b", random_mat(3, 4, &mut r)).unwrap();
    errors.push((
        "elementwise",
        fd_error(&store, |t| {
            let (x, y) = (t.param(a), t.param(b));
            let e = t.elu(x);
            let th = t.tanh(y);
            let sg = t.sigmoid(x);
            let ex = t.exp(y);
            let s1 = t.add(e, th).unwrap();
            let s2 = t.sub(sg, ex).unwrap();
            let m = t.mul(s1, s2).unwrap();
            let mn = t.min(x, y).unwrap();
            let sq = t.square(mn);
            let sc = t.scale(sq, -1.7);
            let ad = t.add_scalar(sc, 0.3);
            let cl = t.clamp(y, -0.5, 0.5);
            let z = t.add(m, ad).unwrap();
            let z = t.mul(z, cl).unwrap();
            let s = t.sum(z);
            let rs = t.row_sum(z);
            let rs = t.square(rs);
            let mean = t.mean(rs);
            t.add(s, mean).unwrap()
        }),
    ));

    let mut store = ParamStore::new();
    let x = store.add("x", random_mat(4, 5, &mut r)).unwrap();
    let w = store.add("w", random_mat(5, 3, &mut r)).unwrap();
    let bias = store.add("b", random_mat(1, 3, &mut r)).unwrap();
    let m = store.add("m", random_mat(3, 2, &mut r)).unwrap();
    let row = store.add("row", random_mat(1, 2, &mut r)).unwrap();
    errors.push((
        "linear and structural",
        fd_error(&store, |t| {
            let (x, w, b, m, row) = (t.param(x), t.param(w), t.param(bias), t.param(m), t.param(row));
            let y = t.affine(x, w, b).unwrap();
            let y = t.tanh(y);
            let z = t.matmul(y, m).unwrap();
            let br = t.broadcast_rows(row, 4).unwrap();
            let z = t.mul(z, br).unwrap();
            let c = t.concat_cols(&[y, z, x]).unwrap();
            let s = t.slice_cols(c, 2, 6).unwrap();
            let s = t.reshape(s, 8, 3).unwrap();
            let s = t.square(s);
            let st = t.sum(y);
            let total = t.sum(s);
            t.mul(total, st).unwrap()
        }),
    ));

    let mut store = ParamStore::new();
    let x = store.add("x", random_mat(18, 3, &mut r)).unwrap();
    let w = store.add("w", random_mat(9, 2, &mut r)).unwrap();
    errors.push((
        "temporal convolution",
        fd_error(&store, |t| {
            let (x, w) = (t.param(x), t.param(w));
            let c = t.im2col(x, 9, 3, 2).unwrap();
            let y = t.matmul(c, w).unwrap();
            let y = t.tanh(y);
            let y = t.square(y);
            t.sum(y)
        }),
    ));

    let spec = small_spec();
    let nets = Networks::new(spec.clone(), &mut r).unwrap();
    let mut store = nets.store.clone();
    for p in &mut store.params {
        if p.name.starts_with("actor.l2") {
            p.value = random_mat(p.value.rows, p.value.cols, &mut r);
        }
    }
    let nets = Networks::from_store(spec.clone(), store).unwrap();
    let batch = 3;
    let obs = random_mat(batch, OBS_DIM, &mut r);
    let x_exp = random_mat(batch, EXP_DIM, &mut r);
    let x_imp = random_mat(batch, IMP_DIM, &mut r);
    let hist = random_mat(batch, spec.history * OBS_DIM, &mut r);
    let actions = random_mat(batch, ACTION_DIM, &mut r);
    let layout = nets.clone();
    errors.push((
        "networks",
        fd_error(&nets.store, |t| {
            let xi = t.input(x_imp.clone());
            let l = layout.encode(t, xi).unwrap();
            let input = layout.actor_input(t, &obs, &x_exp, l, &hist).unwrap();
            let mean = layout.actor_mean(t, input).unwrap();
            let lp = layout.log_prob(t, mean, &actions).unwrap();
            let lp = t.mean(lp);
            let v = layout.value(t, &obs, &x_exp, &x_imp).unwrap();
            let v = t.square(v);
            let v = t.mean(v);
            let h = t.input(hist.clone());
            let e = layout.estimate_explicit(t, h).unwrap().unwrap();
            let e = t.square(e);
            let e = t.mean(e);
            let li = layout.estimate_implicit(t, h).unwrap();
            let li = t.square(li);
            let li = t.mean(li);
            let ent = layout.entropy(t);
            let c = t.concat_cols(&[lp, v, e, li, ent]).unwrap();
            t.sum(c)
        }),
    ));

    // Adaptation terms: each side of the latent matching loss sees only its own gradient.
    let mb = {
        let mut t = Tape::new(&nets.store);
        let xi = t.input(x_imp.clone());
        let l = nets.encode(&mut t, xi).unwrap();
        let input = nets.actor_input(&mut t, &obs, &x_exp, l, &hist).unwrap();
        let mean = nets.actor_mean(&mut t, input).unwrap();
        let lp = nets.log_prob(&mut t, mean, &actions).unwrap();
        Minibatch {
            obs: obs.clone(),
            hist: hist.clone(),
            x_exp: x_exp.clone(),
            x_imp: x_imp.clone(),
            actions: actions.clone(),
            old_log_probs: t.value(lp).data.clone(),
            advantages: vec![0.0; batch],
            returns: vec![0.0; batch],
        }
    };
    let encoder = nets.store.ids_with_prefix("encoder.");
    let implicit = nets.store.ids_with_prefix("est_imp.");
    let mut blocked = 0usize;
    let mut leaked = 0usize;
    let mut t = Tape::new(&nets.store);
    let e = estimator_losses(&mut t, &nets, &hist, &x_exp, &x_imp).unwrap();
    let g = t.backward(e.total).unwrap();
    for id in &encoder {
        blocked += 1;
        leaked += usize::from(g.get(*id).is_some_and(|m| m.data.iter().any(|v| *v != 0.0)));
    }
    let cfg = PpoConfig { value_coef: 0.0, entropy_coef: 0.0, ..PpoConfig::default() };
    let mut t = Tape::new(&nets.store);
    let l = ppo_losses(&mut t, &nets, &mb, &cfg, 0.2).unwrap();
    let g = t.backward(l.total).unwrap();
    for id in &implicit {
        blocked += 1;
        leaked += usize::from(g.get(*id).is_some_and(|m| m.data.iter().any(|v| *v != 0.0)));
    }
    let encoder_trained = encoder.iter().any(|id| g.get(*id).is_some_and(|m| m.data.iter().any(|v| *v != 0.0)));

    let worst = errors.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let detail: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    verdict(
        worst <= 1e-4 && leaked == 0 && encoder_trained,
        format!(
            "max relative gradient error {worst:.1e} ({}); {leaked} of {blocked} blocked parameters received gradient",
            detail.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// Physics

fn static_sim(params: IntrinsicParams, lift: f64) -> Simulation {
    let traj = Arc::new(PlatformTrajectory::stationary(Waypoint6 { z: 1.0, ..Default::default() }, 10.0));
    let model = Arc::new(RobotModel::a1_like());
    let mut sim = Simulation::new(model, SimConfig::default(), params, traj, PlatformGains::uniform(1.25, 0.025), 0.4);
    sim.robot.position.z += lift;
    sim
}

fn momentum_drift() -> f64 {
    let model = RobotModel::a1_like();
    let mut params = IntrinsicParams::nominal(&model);
    params.com_shift = [0.1, -0.05, 0.02];
    let cfg = SimConfig { gravity: 0.0, ..SimConfig::default() };
    let mut s = RobotState::standing(
        &model,
        Vec3::new(0.0, 0.0, 3.0),
        euler_to_rotation(EulerXYZ::new(0.2, -0.1, 0.5)),
        Vec3::new(0.3, -0.2, 0.1),
        Vec3::new(1.5, -0.7, 2.0),
    );
    let mass = params.total_mass(&model);
    let momentum = |s: &RobotState| {
        let r_c = s.orientation.apply(&params.com_offset(&model));
        let v_com = s.linear_velocity + s.angular_velocity.cross(&r_c);
        let i_w = s.orientation.matrix() * model.body_inertia(mass) * s.orientation.matrix().transpose();
        (v_com * mass, i_w * s.angular_velocity)
    };
    let none = ContactResult::default();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (p0, l0) = momentum(&s);
        s = step_robot(&s, &[0.0; 12], &none, &model, &params, &cfg, 0.005).unwrap();
        let (p1, l1) = momentum(&s);
        worst = worst.max((p1 - p0).norm()).max((l1 - l0).norm());
    }
    worst
}

/// Relative error of the settled normal-force sum against the weight.
fn drop_to_stand() -> Result<f64, String> {
    let model = RobotModel::a1_like();
    let params = IntrinsicParams::nominal(&model);
    let mut sim = static_sim(params.clone(), 0.05);
    let target = model.q_nominal;
    for _ in 0..500 {
        sim.step(&target).map_err(|e| e.to_string())?;
        if let Some(c) = sim.collision() {
            return Err(format!("collided while settling: {c:?}"));
        }
    }
    let weight = params.total_mass(&model) * sim.cfg.gravity;
    let n = 50;
    let mut sum = 0.0;
    for _ in 0..n {
        sim.step(&target).map_err(|e| e.to_string())?;
        sum += sim.robot.foot_forces.iter().map(|f| f.z).sum::<f64>();
    }
    Ok((sum / n as f64 - weight).abs() / weight)
}

/// Runs `substeps` contact evaluations on randomized moving-platform
/// episodes and counts friction-cone and negative-normal violations.
fn contact_invariants(substeps: usize) -> Result<(usize, usize), String> {
    let setup = EvalSetup::default();
    let mut rng = seeded(17);
    let mut done = 0usize;
    let mut violations = 0usize;
    let mut episode = 0usize;
    while done < substeps {
        let bench = build_benchmark(&BenchSpec::new(1, 1000 + episode as u64, RangeSet::Test)).map_err(|e| e.to_string())?;
        let ep = &bench.episodes[0];
        let mut sim = Simulation::new(
            setup.model.clone(),
            setup.sim.clone(),
            ep.draw.intrinsics.clone(),
            ep.trajectory.clone(),
            ep.draw.gains,
            ep.draw.yaw,
        );
        let h = sim.cfg.substep_dt();
        let noisy = episode % 2 == 1;
        for _ in 0..500 {
            let mut target = sim.model.q_nominal;
            if noisy {
                for q in &mut target {
                    *q += rng.gen_range(-0.6..=0.6);
                }
            }
            for k in 0..sim.cfg.substeps {
                let t = sim.time + k as f64 * h;
                let feet = sim.robot.feet(&sim.model);
                let mut anchors = sim.robot.stick_anchors;
                let contact = contact_forces(&feet, &sim.platform, &sim.params, &sim.cfg, &mut anchors);
                for leg in 0..4 {
                    let f = contact.forces[leg];
                    let normal = contact.normal[leg];
                    let tangential = f.norm_squared() - normal * normal;
                    if normal < 0.0 || tangential.max(0.0).sqrt() > sim.params.friction * normal + 1e-9 {
                        violations += 1;
                    }
                }
                let tau = apply_pd_targets(&sim.robot.q, &sim.robot.qd, &target, &sim.params);
                let mut next = step_robot(&sim.robot, &tau, &contact, &sim.model, &sim.params, &sim.cfg, h)
                    .map_err(|e| e.to_string())?;
                next.stick_anchors = anchors;
                sim.robot = next;
                sim.platform = step_platform(&sim.platform, &sim.trajectory, t, h);
                done += 1;
            }
            sim.time += sim.cfg.dt;
            if sim.collision().is_some() {
                break;
            }
        }
        episode += 1;
    }
    Ok((done, violations))
}

/// Speed of the robot relative to a flat platform after 1.5 s of constant
/// acceleration along x with frozen joints.
fn slip_after(accel: f64, friction: f64) -> f64 {
    let mut model = RobotModel::a1_like();
    model.joint_inertia = [1e12; 3];
    let mut params = IntrinsicParams::nominal(&model);
    params.friction = friction;
    let cfg = SimConfig::default();
    let mut sim = static_sim(params.clone(), 0.0);
    sim.model = Arc::new(model.clone());
    let h = cfg.substep_dt();
    for _ in 0..100 {
        sim.step(&model.q_nominal).unwrap();
    }
    let mut robot = sim.robot.clone();
    let mut plat = sim.platform.clone();
    let steps = (1.5 / h) as usize;
    for k in 1..=steps {
        let t = k as f64 * h;
        let ramp = (t / 0.1).min(1.0);
        plat.rates[0] += accel * ramp * h;
        plat.pose[0] += plat.rates[0] * h;
        let feet = robot.feet(&model);
        let mut anchors = robot.stick_anchors;
        let contact = contact_forces(&feet, &plat, &params, &cfg, &mut anchors);
        robot = step_robot(&robot, &[0.0; 12], &contact, &model, &params, &cfg, h).unwrap();
        robot.stick_anchors = anchors;
    }
    (robot.linear_velocity.x - plat.rates[0]).abs()
}

fn physics_sanity() -> Outcome {
    let drift = momentum_drift();
    let settle = drop_to_stand()?;
    let (substeps, violations) = contact_invariants(1_000_000)?;
    let mu = 0.3;
    let g = SimConfig::default().gravity;
    let (below, above) = (slip_after(0.95 * mu * g, mu), slip_after(1.05 * mu * g, mu));
    let onset_ok = below < 0.02 && above > 0.1;
    verdict(
        drift <= 1e-10 && settle <= 0.02 && violations == 0 && onset_ok,
        format!(
            "momentum drift {drift:.1e}/step; settled normal force off by {:.2}% of mg; {violations} contact violations in {substeps} substeps; slip at 0.95 mu g {below:.4} m/s, at 1.05 mu g {above:.3} m/s",
            100.0 * settle
        ),
    )
}

// ---------------------------------------------------------------------------
// Training-dependent checks share one run.

struct Trained {
    _dir: tempfile::TempDir,
    outcome: TrainOutcome,
    nets: Networks,
    setup: EvalSetup,
    took: Duration,
}

fn trained() -> Result<&'static Trained, String> {
    static RUN: OnceLock<Result<Trained, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut cfg = TrainConfig::default();
        cfg.run.num_envs = 64;
        cfg.run.iterations = 500;
        cfg.run.checkpoint_every = 100;
        cfg.run.threads = 0;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let setup = EvalSetup::from_config(&cfg);
        let start = Instant::now();
        let outcome = train(cfg, dir.path(), None).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        let ck = load_checkpoint(&outcome.checkpoint).map_err(|e| e.to_string())?;
        let nets = Networks::from_store(ck.spec, ck.params).map_err(|e| e.to_string())?;
        Ok(Trained { _dir: dir, outcome, nets, setup, took })
    })
    .as_ref()
    .map_err(|e| format!("training failed: {e}"))
}

fn shared_bench() -> &'static BenchmarkSet {
    static BENCH: OnceLock<BenchmarkSet> = OnceLock::new();
    BENCH.get_or_init(|| build_benchmark(&BenchSpec::new(500, 2024, RangeSet::Test)).expect("benchmark"))
}

fn stand_still_baseline() -> Outcome {
    let setup = EvalSetup::default();
    let mut spec = BenchSpec::new(100, 77, RangeSet::Test);
    spec.kind = BenchKind::Static;
    let shard = build_benchmark(&spec).map_err(|e| e.to_string())?;
    let opts = EvalOptions::default();
    let (still_static, records) = evaluate(&setup, &Controller::StandStill, &shard, &opts).map_err(|e| e.to_string())?;
    let collisions = records.iter().filter(|r| r.collided).count();

    let t = trained()?;
    let moving = shared_bench().head(100);
    let power = |ctrl: &Controller| -> Result<f64, String> {
        Ok(evaluate(&t.setup, ctrl, &moving, &opts).map_err(|e| e.to_string())?.0.power.mean)
    };
    let still = power(&Controller::StandStill)?;
    let policy = power(&Controller::Policy { nets: &t.nets, mode: EvalMode::Estimated })?;
    let random = power(&Controller::Random { seed: 0 })?;
    let lowest = still < policy && still < random;
    verdict(
        collisions == 0 && lowest,
        format!(
            "static shard: {collisions}/100 collisions (rate {:.2}); mean power on a shared moving shard: stand still {still:.2} W, policy {policy:.2} W, random {random:.2} W",
            still_static.collision_rate.mean
        ),
    )
}

fn random_success_rate_at_level_5() -> Result<f64, String> {
    let setup = EvalSetup::default();
    let mut spec = BenchSpec::new(200, 5, RangeSet::Train);
    spec.kind = BenchKind::Moving(Some(5));
    let bench = build_benchmark(&spec).map_err(|e| e.to_string())?;
    let (_, records) =
        evaluate(&setup, &Controller::Random { seed: 0 }, &bench, &EvalOptions::default()).map_err(|e| e.to_string())?;
    Ok(records.iter().filter(|r| !r.collided).count() as f64 / records.len() as f64)
}

fn training_smoke() -> Outcome {
    let t = trained()?;
    let h = &t.outcome.history;
    if h.len() < 10 {
        return Err(format!("only {} iterations recorded", h.len()));
    }
    let early = h[9].update.explicit_loss;
    let last = h.last().unwrap().update.explicit_loss;
    let drop = 1.0 - last / early;
    let success = t.outcome.level_success.get(&5).copied().unwrap_or(0.0);
    let random = random_success_rate_at_level_5()?;
    let advanced = t.outcome.level.saturating_sub(5);
    let ok = drop >= 0.5 && success - random >= 0.30 && advanced >= 1 && t.took < Duration::from_secs(1800);
    verdict(
        ok,
        format!(
            "explicit-estimator loss {early:.4} at iteration 10 -> {last:.4} (drop {:.0}%); level-5 success {:.1}% vs random {:.1}%; final level {} ({} advanced); {}",
            100.0 * drop,
            100.0 * success,
            100.0 * random,
            t.outcome.level,
            advanced,
            minutes(t.took)
        ),
    )
}

fn ranking() -> Outcome {
    let t = trained()?;
    let bench = shared_bench();
    let opts = EvalOptions::default();
    let (policy, _) = evaluate(&t.setup, &Controller::Policy { nets: &t.nets, mode: EvalMode::Estimated }, bench, &opts)
        .map_err(|e| e.to_string())?;
    let (still, _) = evaluate(&t.setup, &Controller::StandStill, bench, &opts).map_err(|e| e.to_string())?;
    verdict(
        policy.collision_rate.mean < still.collision_rate.mean,
        format!(
            "500 episodes: policy collision rate {:.3}, stand still {:.3}",
            policy.collision_rate.mean, still.collision_rate.mean
        ),
    )
}

fn estimator_report() -> Outcome {
    let t = trained()?;
    let bench = shared_bench().head(50);
    let (report, trace) = estimator_accuracy(&t.setup, &t.nets, EvalMode::Estimated, EstimatorSource::Networks, &bench)
        .map_err(|e| e.to_string())?;
    let structure = report.explicit.len() == 13 && EXP_NAMES.len() == 13;
    let finite = report.explicit.iter().all(|s| s.mean.is_finite() && s.std.is_finite())
        && report.implicit.mean.is_finite()
        && report.implicit.std.is_finite();
    let (truth, _) = estimator_accuracy(&t.setup, &t.nets, EvalMode::Estimated, EstimatorSource::GroundTruth, &bench)
        .map_err(|e| e.to_string())?;
    let zero = truth.explicit.iter().all(|s| s.mean == 0.0 && s.std == 0.0) && truth.implicit.mean == 0.0;
    let worst = report.explicit.iter().map(|s| s.mean).fold(0.0, f64::max);
    verdict(
        structure && finite && zero && !trace.is_empty(),
        format!(
            "{} explicit + 1 latent entries over {} steps, largest explicit L1 error {worst:.3}, latent L2 {:.3} ± {:.3}; injected ground truth gives zero: {zero}",
            report.explicit.len(),
            report.steps,
            report.implicit.mean,
            report.implicit.std
        ),
    )
}

// ---------------------------------------------------------------------------
// Determinism of the command-line tool

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn run_cli(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_quadbal"))
        .args(args)
        .current_dir(cwd)
        .env_remove("QUADBAL_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn cli_session(cwd: &Path) -> Result<(), String> {
    let mut cfg = TrainConfig::smoke();
    cfg.run.num_envs = 4;
    cfg.run.iterations = 3;
    cfg.run.checkpoint_every = 2;
    std::fs::write(cwd.join("tiny.toml"), cfg.to_toml_string()).map_err(|e| e.to_string())?;
    let t1 = ["--threads", "1", "--seed", "9"];
    let with = |cmd: &[&'static str]| -> Vec<&'static str> { cmd.iter().chain(t1.iter()).copied().collect() };
    run_cli(cwd, &with(&["gen-bench", "--count", "12", "--out", "bench"]))?;
    run_cli(cwd, &with(&["gen-bench", "--count", "6", "--static", "--out", "bench_static"]))?;
    run_cli(cwd, &with(&["train", "--config", "tiny.toml", "--out", "train"]))?;
    run_cli(cwd, &with(&["train", "--resume", "train/checkpoint_000002.bin", "--iterations", "4", "--out", "resumed"]))?;
    run_cli(
        cwd,
        &with(&[
            "eval",
            "--checkpoint",
            "train/checkpoint_latest.bin",
            "--bench",
            "bench",
            "--mode",
            "privileged",
            "--baseline",
            "stand-still",
            "--baseline",
            "random",
            "--state-logs",
            "2",
            "--out",
            "eval",
        ]),
    )?;
    run_cli(cwd, &with(&["export-plots", "--run", "bench", "--what", "stats"]))?;
    run_cli(cwd, &with(&["export-plots", "--run", "train", "--what", "training-curves"]))?;
    run_cli(cwd, &with(&["export-plots", "--run", "eval", "--what", "estimator-traces"]))?;
    Ok(())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    cli_session(a.path())?;
    cli_session(b.path())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<String> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let same_layout = ta.len() == tb.len() && ta.iter().zip(&tb).all(|(x, y)| x.0 == y.0);
    verdict(
        same_layout && differing.is_empty(),
        if differing.is_empty() && same_layout {
            format!("{} files from gen-bench, train, resume, eval and export-plots are byte-identical across two runs", ta.len())
        } else {
            format!("layout identical {same_layout}; differing files: {}", differing.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------

fn main() {
    let checks: [(&str, fn() -> Outcome); 11] = [
        ("benchmark statistics", benchmark_statistics),
        ("waypoint count trend", waypoint_count_trend),
        ("spline correctness", spline_correctness),
        ("reward suite", reward_suite),
        ("autodiff", autodiff),
        ("physics sanity", physics_sanity),
        ("stand-still baseline", stand_still_baseline),
        ("training smoke", training_smoke),
        ("collision ranking", ranking),
        ("estimator report", estimator_report),
        ("determinism", determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("\nacceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
