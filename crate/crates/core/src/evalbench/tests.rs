use super::*;
use crate::env::{EXP_DIM, EXP_NAMES};
use crate::nets::{NetSpec, Networks};
use crate::simcore::IntrinsicParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_nets(history: usize) -> Networks {
    let spec = NetSpec {
        history,
        latent_dim: 3,
        actor_hidden: vec![8, 6],
        encoder_hidden: vec![6],
        critic_hidden: vec![6],
        step_hidden: 4,
        conv_channels: 3,
        conv_kernel: 3,
        conv_stride: 2,
        ..NetSpec::default()
    };
    Networks::new(spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
}

fn pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
}

fn nominal_static_episode(setup: &EvalSetup) -> BenchEpisode {
    let mut set = build_benchmark(&BenchSpec { kind: BenchKind::Static, ..BenchSpec::new(1, 0, RangeSet::Test) }).unwrap();
    let mut ep = set.episodes.remove(0);
    ep.draw.intrinsics = IntrinsicParams::nominal(&setup.model);
    ep.draw.yaw = 0.3;
    ep
}

#[test]
fn benchmark_is_deterministic_and_thread_independent() {
    let spec = BenchSpec::new(40, 7, RangeSet::Test);
    let a = pool(1).install(|| build_benchmark(&spec)).unwrap();
    let b = pool(4).install(|| build_benchmark(&spec)).unwrap();
    assert_eq!(a.manifest(), b.manifest());
    assert_eq!(a, b);
    assert!(a.episodes.iter().all(|e| (4..=16).contains(&e.waypoints())));
    let counts: std::collections::BTreeSet<usize> = a.episodes.iter().map(|e| e.waypoints()).collect();
    assert!(counts.len() > 5);
    let other = build_benchmark(&BenchSpec::new(40, 8, RangeSet::Test)).unwrap();
    assert_ne!(a.manifest(), other.manifest());
}

#[test]
fn prefix_of_a_larger_set_is_the_smaller_set() {
    let small = build_benchmark(&BenchSpec::new(5, 3, RangeSet::Train)).unwrap();
    let large = build_benchmark(&BenchSpec::new(12, 3, RangeSet::Train)).unwrap();
    assert_eq!(small.episodes, large.head(5).episodes);
    assert!(large.episodes.iter().all(|e| (5..=15).contains(&e.waypoints())));
}

#[test]
fn zero_count_is_rejected() {
    assert!(matches!(build_benchmark(&BenchSpec::new(0, 1, RangeSet::Test)), Err(EvalError::Invalid(_))));
    let pinned = BenchSpec { kind: BenchKind::Moving(Some(3)), ..BenchSpec::new(2, 1, RangeSet::Test) };
    assert!(build_benchmark(&pinned).is_err());
}

#[test]
fn written_benchmark_loads_back_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let spec = BenchSpec { kind: BenchKind::Moving(Some(6)), ..BenchSpec::new(6, 11, RangeSet::Test) };
    let set = build_benchmark(&spec).unwrap();
    set.write(dir.path()).unwrap();
    assert_eq!(std::fs::read_dir(dir.path().join("trajectories")).unwrap().count(), 12);
    let loaded = BenchmarkSet::load(dir.path()).unwrap();
    assert_eq!(loaded, set);

    let path = dir.path().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replacen(",6,", ",7,", 1);
    assert_ne!(text, tampered);
    std::fs::write(&path, tampered).unwrap();
    assert!(matches!(BenchmarkSet::load(dir.path()), Err(EvalError::Manifest { .. })));
    std::fs::write(&path, text.lines().take(5).collect::<Vec<_>>().join("\n")).unwrap();
    assert!(BenchmarkSet::load(dir.path()).is_err());
}

#[test]
fn static_platforms_are_level_and_still() {
    let set = build_benchmark(&BenchSpec { kind: BenchKind::Static, ..BenchSpec::new(10, 2, RangeSet::Test) }).unwrap();
    for e in &set.episodes {
        let s = e.trajectory.sample_clamped(3.7);
        assert_eq!(s.euler.roll, 0.0);
        assert_eq!(s.euler.pitch, 0.0);
        assert_eq!(s.linear_velocity.norm(), 0.0);
        assert!(e.stats.path_length < 1e-9);
    }
}

#[test]
fn stand_still_holds_a_nominal_robot_on_a_still_platform() {
    let setup = EvalSetup::default();
    let ep = nominal_static_episode(&setup);
    let rec = run_episode(&setup, &Controller::StandStill, &ep, EpisodeOptions { state_log: true, ..Default::default() }).unwrap();
    assert!(!rec.collided);
    assert_eq!(rec.steps, 500);
    assert_eq!(rec.height_violations, 0);
    assert!(rec.position_sum / 500.0 < 0.01);
    assert!(rec.rotation_sum / 500.0 < 0.01);
    assert!(rec.power_sum >= 0.0);
    let log = rec.state_log.unwrap();
    assert_eq!(log.lines().count(), 502);
}

#[test]
fn metrics_stop_at_the_first_collision() {
    let setup = EvalSetup::default();
    let set = build_benchmark(&BenchSpec::new(8, 5, RangeSet::Test)).unwrap();
    let (report, records) = evaluate(&setup, &Controller::Random { seed: 0 }, &set, &EvalOptions { shards: 4, state_logs: 2 }).unwrap();
    assert_eq!(report.collision_rate.mean, 1.0);
    for r in &records {
        assert!(r.collided);
        assert!(r.steps < 500);
    }
    assert!(records[0].state_log.is_some() && records[2].state_log.is_none());
    assert_eq!(report.steps, records.iter().map(|r| r.steps).sum::<usize>());
    for s in [report.collision_rate, report.height_violation_rate] {
        assert!((0.0..=1.0).contains(&s.mean));
    }
    assert!(report.power.mean > 0.0);
}

#[test]
fn evaluation_is_repeatable_across_thread_counts() {
    let setup = EvalSetup::default();
    let set = build_benchmark(&BenchSpec::new(6, 9, RangeSet::Test)).unwrap();
    let nets = small_nets(20);
    let ctrl = Controller::Policy { nets: &nets, mode: EvalMode::Estimated };
    let a = pool(1).install(|| evaluate(&setup, &ctrl, &set, &EvalOptions::default())).unwrap();
    let b = pool(3).install(|| evaluate(&setup, &ctrl, &set, &EvalOptions::default())).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

fn record(collided: bool, steps: usize, height: usize, pos: f64, rot: f64, power: f64) -> EpisodeRecord {
    EpisodeRecord {
        collided,
        steps,
        height_violations: height,
        position_sum: pos,
        rotation_sum: rot,
        power_sum: power,
        ..Default::default()
    }
}

#[test]
fn pooled_metrics_and_shard_spread() {
    let records = vec![
        record(true, 10, 5, 1.0, 2.0, 30.0),
        record(false, 30, 0, 3.0, 2.0, 10.0),
        record(false, 20, 2, 2.0, 0.0, 20.0),
        record(true, 20, 0, 2.0, 4.0, 0.0),
    ];
    let r = MetricsReport::from_records("x", &records, 2);
    assert_eq!(r.episodes, 4);
    assert_eq!(r.steps, 80);
    assert_eq!(r.collision_rate.mean, 0.5);
    assert_eq!(r.height_violation_rate.mean, 7.0 / 80.0);
    assert_eq!(r.position_deviation.mean, 0.1);
    assert_eq!(r.rotation_deviation.mean, 0.1);
    assert_eq!(r.power.mean, 60.0 / 80.0);
    // Shards {0,1} and {2,3} have identical collision rates and positions.
    assert_eq!(r.collision_rate.std, 0.0);
    assert_eq!(r.position_deviation.std, 0.0);
    let (h0, h1): (f64, f64) = (5.0 / 40.0, 2.0 / 40.0);
    assert!((r.height_violation_rate.std - (h0 - h1).abs() / 2f64.sqrt()).abs() < 1e-15);
    let single = MetricsReport::from_records("y", &records[..1], 5);
    assert_eq!(single.power.std, 0.0);
}

#[test]
fn report_csv_round_trips_exactly() {
    let mut r = MetricsReport::from_records(
        "stand still",
        &[record(true, 7, 1, 0.1 + 0.2, 1.0 / 3.0, 2.0f64.sqrt()), record(false, 9, 0, 1e-17, 0.0, 123.456)],
        2,
    );
    r.power.std = f64::MIN_POSITIVE;
    let other = MetricsReport { label: "policy (estimated)".into(), ..r.clone() };
    let csv = report_csv(&[r.clone(), other.clone()]);
    assert_eq!(parse_report_csv(&csv).unwrap(), vec![r.clone(), other]);
    assert!(parse_report_csv("nope\n").is_err());
    assert!(parse_report_csv(&csv.replace("stand still,2", "stand still,x")).is_err());

    let table = report_table(&[r]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    for col in ["Collision", "Height viol.", "Position m", "Rotation rad", "Power W"] {
        assert!(lines[0].contains(col));
    }
    assert!(lines[2].starts_with("stand still"));
}

#[test]
fn emit_report_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_report(dir.path(), &[], None).is_err());
    let r = MetricsReport::from_records("random", &[record(true, 3, 0, 0.3, 0.1, 9.0)], 5);
    emit_report(dir.path(), std::slice::from_ref(&r), None).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(parse_report_csv(&csv).unwrap(), vec![r]);
    assert!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap().contains("random"));
}

#[test]
fn injected_ground_truth_gives_zero_error() {
    let setup = EvalSetup::default();
    let set = build_benchmark(&BenchSpec::new(3, 21, RangeSet::Test)).unwrap();
    let nets = small_nets(20);
    let (report, trace) = estimator_accuracy(&setup, &nets, EvalMode::Estimated, EstimatorSource::GroundTruth, &set).unwrap();
    assert_eq!(report.explicit.len(), EXP_DIM);
    assert!(report.steps > 0);
    for s in report.explicit.iter().chain([&report.implicit]) {
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.std, 0.0);
    }
    assert!(!trace.is_empty());
    assert!(trace.iter().all(|r| r.estimate == r.truth));
}

#[test]
fn estimator_report_structure_and_trace_layout() {
    let setup = EvalSetup::default();
    let set = build_benchmark(&BenchSpec::new(3, 21, RangeSet::Test)).unwrap();
    let nets = small_nets(20);
    let (report, trace) = estimator_accuracy(&setup, &nets, EvalMode::Privileged, EstimatorSource::Networks, &set).unwrap();
    assert_eq!(report.explicit.len(), 13);
    for s in report.explicit.iter().chain([&report.implicit]) {
        assert!(s.mean.is_finite() && s.mean >= 0.0);
        assert!(s.std.is_finite() && s.std >= 0.0);
    }
    assert!(report.explicit.iter().any(|s| s.mean > 0.0));
    let first = run_episode(&setup, &Controller::StandStill, &set.episodes[0], EpisodeOptions::default()).unwrap();
    assert!(!trace.is_empty());
    assert!(trace.len() <= 500 && first.steps <= 500);

    let dir = tempfile::tempdir().unwrap();
    let r = MetricsReport::from_records("p", &[record(false, 1, 0, 0.0, 0.0, 0.0)], 1);
    emit_report(dir.path(), &[r], Some((&report, &trace))).unwrap();
    let acc = std::fs::read_to_string(dir.path().join("plotdata/estimator_accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 1 + 13 + 1);
    let tr = std::fs::read_to_string(dir.path().join("plotdata/estimator_trace.csv")).unwrap();
    let header: Vec<&str> = tr.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 2 * EXP_DIM);
    for (i, name) in EXP_NAMES.iter().enumerate() {
        assert_eq!(header[1 + i], format!("est_{name}"));
        assert_eq!(header[1 + EXP_DIM + i], format!("true_{name}"));
    }
    assert_eq!(tr.lines().count(), 1 + trace.len());
    let txt = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(txt.contains("latent"));
}

#[test]
fn incompatible_networks_are_rejected() {
    let setup = EvalSetup::default();
    let set = build_benchmark(&BenchSpec::new(1, 1, RangeSet::Test)).unwrap();
    let nets = small_nets(12);
    let ctrl = Controller::Policy { nets: &nets, mode: EvalMode::Estimated };
    match evaluate(&setup, &ctrl, &set, &EvalOptions::default()) {
        Err(EvalError::Incompatible(msg)) => assert!(msg.contains("history")),
        other => panic!("expected an incompatibility error, got {other:?}"),
    }
}

#[test]
fn estimator_accuracy_needs_an_explicit_estimator() {
    let setup = EvalSetup::default();
    let set = build_benchmark(&BenchSpec::new(1, 1, RangeSet::Test)).unwrap();
    let base = small_nets(20).spec;
    let spec = NetSpec {
        ablation: crate::nets::Ablation { no_ee: true, no_ac: true, ..Default::default() },
        ..base
    };
    let nets = Networks::new(spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let r = estimator_accuracy(&setup, &nets, EvalMode::Estimated, EstimatorSource::Networks, &set);
    assert!(matches!(r, Err(EvalError::Incompatible(_))));
}

#[test]
fn more_waypoints_mean_longer_faster_paths() {
    let trend = waypoint_trend(RangeSet::Test, &[5, 10, 15], 60, 1).unwrap();
    assert_eq!(trend.len(), 3);
    for w in trend.windows(2) {
        assert!(w[1].mean_path_length > w[0].mean_path_length);
        assert!(w[1].mean_speed > w[0].mean_speed);
    }
    let hist = trajectory_histograms(&trend, 10);
    assert_eq!(hist.lines().count(), 1 + 2 * 3 * 10);
    let total: usize = hist.lines().skip(1).filter(|l| l.contains(",path_length,")).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 180);
    assert_eq!(trend_csv(&trend).lines().count(), 4);
}
